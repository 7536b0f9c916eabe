#include <algorithm>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <set>

#include "proofforge/error.hpp"
#include "proofforge/evalmetrics.hpp"
#include "proofforge/util.hpp"

namespace proofforge::evalmetrics {

using nlohmann::json;

json to_json(const ComparisonRecord& r) {
  json j{{"model", r.model},
         {"problem_id", r.problem_id},
         {"final_status", formalize::to_string(r.final_status)},
         {"similarity", nullptr},
         {"beq_pass", nullptr}};
  if (r.similarity) j["similarity"] = *r.similarity;
  if (r.beq_pass) j["beq_pass"] = *r.beq_pass;
  return j;
}

ComparisonRecord comparison_from_json(const json& j) {
  try {
    ComparisonRecord r;
    r.model = j.at("model").get<std::string>();
    r.problem_id = j.at("problem_id").get<std::string>();
    r.final_status = formalize::parse_final_status(j.at("final_status").get<std::string>());
    if (j.contains("similarity") && !j["similarity"].is_null()) {
      double s = j["similarity"].get<double>();
      if (!(s >= 0.0 && s <= 1.0)) throw Error(ErrorKind::schema, "similarity outside [0, 1]");
      r.similarity = s;
    }
    if (j.contains("beq_pass") && !j["beq_pass"].is_null()) r.beq_pass = j["beq_pass"].get<bool>();
    return r;
  } catch (const json::exception& e) {
    throw Error(ErrorKind::schema, std::string("comparison record: ") + e.what());
  }
}

std::vector<ComparisonRecord> load_comparisons(const std::filesystem::path& path) {
  std::vector<ComparisonRecord> out;
  int n = 0;
  for (const auto& line : util::split_lines(util::read_file(path))) {
    ++n;
    if (util::trim(line).empty()) continue;
    try {
      out.push_back(comparison_from_json(json::parse(line)));
    } catch (const json::parse_error& e) {
      throw Error(ErrorKind::parse, path.string() + " line " + std::to_string(n) + ": " + e.what());
    } catch (const Error& e) {
      throw Error(e.kind(), path.string() + " line " + std::to_string(n) + ": " + e.what());
    }
  }
  return out;
}

void save_comparisons(const std::filesystem::path& path, const std::vector<ComparisonRecord>& records) {
  std::string out;
  for (const auto& r : records) out += to_json(r).dump() + "\n";
  util::write_file_atomic(path, out);
}

std::map<std::string, std::string> load_gold(const std::filesystem::path& path) {
  std::map<std::string, std::string> gold;
  int n = 0;
  for (const auto& line : util::split_lines(util::read_file(path))) {
    ++n;
    if (util::trim(line).empty()) continue;
    std::string where = path.string() + " line " + std::to_string(n);
    json j;
    try {
      j = json::parse(line);
    } catch (const json::parse_error& e) {
      throw Error(ErrorKind::parse, where + ": " + e.what());
    }
    if (!j.is_object() || !j.contains("problem_id") || !j["problem_id"].is_string() ||
        !j.contains("theorem_code") || !j["theorem_code"].is_string()) {
      throw Error(ErrorKind::schema, where + ": expected {problem_id, theorem_code} strings");
    }
    auto id = j["problem_id"].get<std::string>();
    if (!gold.emplace(id, j["theorem_code"].get<std::string>()).second) {
      throw Error(ErrorKind::duplicate_id, where + ": duplicate problem_id " + id);
    }
  }
  return gold;
}

std::vector<ComparisonRecord> compare_candidates(const std::vector<formalize::Candidate>& candidates,
                                                 const std::map<std::string, OpTree>& gold,
                                                 const std::map<std::pair<std::string, std::string>, bool>& beq,
                                                 Normalization norm) {
  std::vector<ComparisonRecord> out;
  out.reserve(candidates.size());
  for (const auto& c : candidates) {
    ComparisonRecord r;
    r.model = c.model;
    r.problem_id = c.problem_id;
    r.final_status = c.final_status;
    if (auto g = gold.find(c.problem_id); g != gold.end()) {
      double sim = 0.0;
      if (c.final_status == formalize::FinalStatus::valid) {
        try {
          sim = gted_similarity(parse_optree(c.final_code), g->second, norm).similarity;
        } catch (const Error& e) {
          if (e.kind() != ErrorKind::parse) throw;
        }
      }
      r.similarity = sim;
    }
    if (auto b = beq.find({c.model, c.problem_id}); b != beq.end()) {
      r.beq_pass = c.final_status == formalize::FinalStatus::valid && b->second;
    }
    out.push_back(std::move(r));
  }
  return out;
}

namespace {

bool above(double sim, double threshold) {
  if (threshold >= 1.0) return sim >= 1.0 - 1e-12;
  return sim > threshold;
}

}  // namespace

std::vector<MetricsRow> aggregate_rows(const std::vector<ComparisonRecord>& records,
                                       const AggregateOptions& options) {
  std::vector<std::string> order;
  std::map<std::string, std::vector<const ComparisonRecord*>> by_model;
  for (const auto& r : records) {
    auto& bucket = by_model[r.model];
    if (bucket.empty()) order.push_back(r.model);
    bucket.push_back(&r);
  }

  std::vector<MetricsRow> rows;
  for (const auto& model : order) {
    const auto& recs = by_model[model];
    std::set<std::string> seen;
    for (const auto* r : recs) {
      if (!seen.insert(r->problem_id).second) {
        throw Error(ErrorKind::duplicate_id, "model " + model + " has two records for " + r->problem_id);
      }
    }
    MetricsRow row;
    row.model = model;
    row.denominator = options.denominator > 0 ? options.denominator : static_cast<int>(recs.size());
    if (static_cast<int>(recs.size()) > row.denominator) {
      throw Error(ErrorKind::invalid_argument, "model " + model + " has " + std::to_string(recs.size()) +
                                                   " records, more than the denominator " +
                                                   std::to_string(row.denominator));
    }
    double sum = 0, sum_compiled = 0;
    int compared = 0, compared_compiled = 0;
    std::vector<int> heat(options.heatmap_thresholds.size(), 0);
    for (const auto* r : recs) {
      bool valid = r->final_status == formalize::FinalStatus::valid;
      if (valid) ++row.compile_success;
      if (valid && r->beq_pass.value_or(false)) ++row.beq_count;
      if (!r->similarity) {
        ++row.missing_gold;
        continue;
      }
      double s = valid ? *r->similarity : 0.0;
      sum += s;
      ++compared;
      if (valid) {
        sum_compiled += s;
        ++compared_compiled;
        if (above(s, options.threshold)) ++row.gted_above_threshold;
      }
      for (std::size_t k = 0; k < heat.size(); ++k) {
        if (s >= options.heatmap_thresholds[k]) ++heat[k];
      }
    }
    row.gted_mean = compared ? sum / compared : 0.0;
    row.gted_mean_compiled = compared_compiled ? sum_compiled / compared_compiled : 0.0;
    for (int h : heat) row.heatmap.push_back(compared ? static_cast<double>(h) / compared : 0.0);
    rows.push_back(std::move(row));
  }
  return rows;
}

ReportFormat parse_report_format(std::string_view s) {
  if (s == "csv") return ReportFormat::csv;
  if (s == "json") return ReportFormat::json;
  if (s == "markdown" || s == "md") return ReportFormat::markdown;
  throw Error(ErrorKind::invalid_argument, "unknown report format '" + std::string(s) + "'");
}

namespace {

std::string fixed(double v, int digits) {
  char buf[64];
  std::snprintf(buf, sizeof buf, "%.*f", digits, v);
  return buf;
}

std::string short_num(double v) {
  char buf[64];
  std::snprintf(buf, sizeof buf, "%g", v);
  return buf;
}

std::string csv_field(const std::string& s) {
  if (s.find_first_of(",\"\n\r") == std::string::npos) return s;
  std::string out = "\"";
  for (char c : s) {
    if (c == '"') out += '"';
    out += c;
  }
  return out + "\"";
}

std::string md_cell(const std::string& s) {
  std::string out;
  for (char c : s) {
    if (c == '|') out += '\\';
    out += c == '\n' ? ' ' : c;
  }
  return out;
}

}  // namespace

std::string emit_report(const std::vector<MetricsRow>& rows, ReportFormat format,
                        const std::vector<double>& heatmap_thresholds, double threshold) {
  if (rows.empty()) throw Error(ErrorKind::invalid_argument, "report needs at least one row");
  for (const auto& r : rows) {
    if (r.heatmap.size() != heatmap_thresholds.size()) {
      throw Error(ErrorKind::invalid_argument, "row " + r.model + " has " + std::to_string(r.heatmap.size()) +
                                                   " heatmap values for " +
                                                   std::to_string(heatmap_thresholds.size()) + " thresholds");
    }
  }
  std::string out;
  switch (format) {
    case ReportFormat::csv: {
      out = "model,beq,gted_mean,gted_above,compile,denominator";
      for (double t : heatmap_thresholds) out += ",ge_" + short_num(t);
      out += "\n";
      for (const auto& r : rows) {
        out += csv_field(r.model) + "," + std::to_string(r.beq_count) + "," + fixed(r.gted_mean, 2) + "," +
               std::to_string(r.gted_above_threshold) + "," + std::to_string(r.compile_success) + "," +
               std::to_string(r.denominator);
        for (double h : r.heatmap) out += "," + fixed(h, 3);
        out += "\n";
      }
      break;
    }
    case ReportFormat::json: {
      json arr = json::array();
      for (const auto& r : rows) {
        json heat = json::object();
        for (std::size_t k = 0; k < heatmap_thresholds.size(); ++k) heat[short_num(heatmap_thresholds[k])] = r.heatmap[k];
        arr.push_back({{"model", r.model},
                       {"beq", r.beq_count},
                       {"gted_mean", r.gted_mean},
                       {"gted_mean_compiled", r.gted_mean_compiled},
                       {"gted_above", r.gted_above_threshold},
                       {"compile", r.compile_success},
                       {"denominator", r.denominator},
                       {"missing_gold", r.missing_gold},
                       {"heatmap", heat}});
      }
      out = json{{"threshold", threshold}, {"rows", arr}}.dump(2) + "\n";
      break;
    }
    case ReportFormat::markdown: {
      std::vector<const MetricsRow*> sorted;
      for (const auto& r : rows) sorted.push_back(&r);
      std::stable_sort(sorted.begin(), sorted.end(), [](const MetricsRow* a, const MetricsRow* b) {
        if (a->beq_count != b->beq_count) return a->beq_count > b->beq_count;
        return a->model < b->model;
      });
      out = "| Model | BEq | GTED mean | GTED > " + short_num(threshold) + " | Compile | Denominator |";
      for (double t : heatmap_thresholds) out += " ≥ " + short_num(t) + " |";
      out += "\n|---|---:|---:|---:|---:|---:|";
      for (std::size_t k = 0; k < heatmap_thresholds.size(); ++k) out += "---:|";
      out += "\n";
      for (const auto* r : sorted) {
        out += "| " + md_cell(r->model) + " | " + std::to_string(r->beq_count) + " | " + fixed(r->gted_mean, 2) +
               " | " + std::to_string(r->gted_above_threshold) + " | " + std::to_string(r->compile_success) +
               " | " + std::to_string(r->denominator) + " |";
        for (double h : r->heatmap) out += " " + fixed(h, 3) + " |";
        out += "\n";
      }
      int missing = 0;
      for (const auto& r : rows) missing += r.missing_gold;
      if (missing > 0) out += "\n" + std::to_string(missing) + " candidate(s) had no gold statement.\n";
      break;
    }
  }
  return out;
}

void write_report(const std::filesystem::path& path, const std::vector<MetricsRow>& rows, ReportFormat format,
                  const std::vector<double>& heatmap_thresholds, double threshold) {
  std::string text = emit_report(rows, format, heatmap_thresholds, threshold);
  std::ofstream f(path, std::ios::binary | std::ios::trunc);
  if (!f) throw Error(ErrorKind::io, "cannot write report to " + path.string());
  f << text;
  if (!f.flush()) throw Error(ErrorKind::io, "write failed for " + path.string());
}

std::string emit_ablation(const std::vector<MetricsRow>& zero_shot, const std::vector<MetricsRow>& refined,
                          ReportFormat format) {
  std::map<std::string, const MetricsRow*> zs;
  for (const auto& r : zero_shot) zs[r.model] = &r;
  auto pct = [](const MetricsRow* r) {
    return r && r->denominator > 0 ? 100.0 * r->compile_success / r->denominator : 0.0;
  };
  std::vector<std::string> order;
  for (const auto& r : refined) order.push_back(r.model);
  for (const auto& r : zero_shot) {
    if (std::find(order.begin(), order.end(), r.model) == order.end()) order.push_back(r.model);
  }
  std::map<std::string, const MetricsRow*> rf;
  for (const auto& r : refined) rf[r.model] = &r;
  auto get = [](const std::map<std::string, const MetricsRow*>& m, const std::string& k) -> const MetricsRow* {
    auto it = m.find(k);
    return it == m.end() ? nullptr : it->second;
  };

  std::string out;
  switch (format) {
    case ReportFormat::csv:
      out = "model,zs_compile,zs_percent,refined_compile,refined_percent,denominator\n";
      for (const auto& m : order) {
        const auto *a = get(zs, m), *b = get(rf, m);
        int denom = b ? b->denominator : a->denominator;
        out += csv_field(m) + "," + std::to_string(a ? a->compile_success : 0) + "," + fixed(pct(a), 1) + "," +
               std::to_string(b ? b->compile_success : 0) + "," + fixed(pct(b), 1) + "," + std::to_string(denom) +
               "\n";
      }
      break;
    case ReportFormat::json: {
      json arr = json::array();
      for (const auto& m : order) {
        const auto *a = get(zs, m), *b = get(rf, m);
        arr.push_back({{"model", m},
                       {"zs_compile", a ? a->compile_success : 0},
                       {"zs_percent", pct(a)},
                       {"refined_compile", b ? b->compile_success : 0},
                       {"refined_percent", pct(b)},
                       {"denominator", b ? b->denominator : a->denominator}});
      }
      out = arr.dump(2) + "\n";
      break;
    }
    case ReportFormat::markdown:
      out = "| Model | ZS (%) | Doc+FB (%) |\n|---|---:|---:|\n";
      for (const auto& m : order) {
        out += "| " + md_cell(m) + " | " + fixed(pct(get(zs, m)), 1) + " | " + fixed(pct(get(rf, m)), 1) + " |\n";
      }
      break;
  }
  return out;
}

double best_of_ensemble_rate(const std::vector<ComparisonRecord>& records) {
  std::map<std::string, bool> solved;
  for (const auto& r : records) {
    solved[r.problem_id] = solved[r.problem_id] || r.final_status == formalize::FinalStatus::valid;
  }
  if (solved.empty()) return 0.0;
  int n = 0;
  for (const auto& [id, ok] : solved) n += ok;
  return static_cast<double>(n) / solved.size();
}

}  // namespace proofforge::evalmetrics
