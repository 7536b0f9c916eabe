// proofforge command line: corpus, context packs, formalization runs,
// proving runs, metrics and the annotation hub.

#include <spdlog/sinks/stdout_color_sinks.h>
#include <spdlog/spdlog.h>

#include <cctype>
#include <csignal>
#include <cstdio>
#include <fstream>
#include <iostream>
#include <set>
#include <sstream>

#include "CLI11.hpp"
#include "json.hpp"
#include "proofforge/contextkb.hpp"
#include "proofforge/corpus.hpp"
#include "proofforge/error.hpp"
#include "proofforge/evalmetrics.hpp"
#include "proofforge/formalize.hpp"
#include "proofforge/hub.hpp"
#include "proofforge/leanrun.hpp"
#include "proofforge/modelgw.hpp"
#include "proofforge/prover.hpp"
#include "proofforge/util.hpp"

namespace fs = std::filesystem;
using nlohmann::json;
using namespace proofforge;

namespace {

// Run configuration file. Example:
//   {"models": [{"name": "m1", "provider": "scripted"}],
//    "summarizer": "m1", "agent": "m1", "labeler": "m1",
//    "provers": [{"name": "p1", "provider": "scripted"}],
//    "scripted_fixture": "scripted.json",
//    "lean": {"backend": "fake", "fixture": "fake_lean.json"},
//    "workers": 4, "max_iterations": 6}
struct RunConfig {
  std::vector<modelgw::ModelSpec> models;
  std::map<std::string, modelgw::ModelSpec> by_name;
  std::string summarizer, agent, labeler;
  std::optional<fs::path> scripted_fixture;
  leanrun::Config lean;
  std::size_t workers = 4;
  int max_iterations = 6;

  const modelgw::ModelSpec& model(const std::string& name) const {
    auto it = by_name.find(name);
    if (it == by_name.end()) throw Error(ErrorKind::invalid_argument, "model '" + name + "' is not in the config");
    return it->second;
  }
};

RunConfig load_config(const fs::path& path) {
  json j;
  try {
    j = json::parse(util::read_file(path));
  } catch (const json::parse_error& e) {
    throw Error(ErrorKind::parse, path.string() + ": " + e.what());
  }
  static const std::set<std::string> keys = {"models",  "summarizer", "agent",   "labeler",       "provers",
                                             "lean",    "workers",    "max_iterations", "scripted_fixture"};
  for (const auto& [k, _] : j.items()) {
    if (!keys.count(k)) throw Error(ErrorKind::invalid_argument, path.string() + ": unknown key '" + k + "'");
  }
  fs::path base = path.parent_path();
  RunConfig cfg;
  for (const auto& m : j.at("models")) {
    auto spec = modelgw::model_spec_from_json(m);
    if (cfg.by_name.count(spec.name)) throw Error(ErrorKind::duplicate_id, "model '" + spec.name + "' listed twice");
    cfg.by_name.emplace(spec.name, spec);
    cfg.models.push_back(spec);
  }
  if (cfg.models.empty()) throw Error(ErrorKind::invalid_argument, path.string() + ": no models");
  // provers are addressable by name but take no part in the formalization ensemble
  for (const auto& m : j.value("provers", json::array())) {
    auto spec = modelgw::model_spec_from_json(m);
    if (!cfg.by_name.emplace(spec.name, spec).second) {
      throw Error(ErrorKind::duplicate_id, "model '" + spec.name + "' listed twice");
    }
  }
  auto pick = [&](const char* key) {
    if (!j.contains(key)) return cfg.models.front().name;
    if (j[key].is_object()) {
      auto spec = modelgw::model_spec_from_json(j[key]);
      cfg.by_name.emplace(spec.name, spec);
      return spec.name;
    }
    return j[key].get<std::string>();
  };
  cfg.summarizer = pick("summarizer");
  cfg.agent = pick("agent");
  cfg.labeler = pick("labeler");
  if (j.contains("scripted_fixture")) {
    fs::path f = j["scripted_fixture"].get<std::string>();
    cfg.scripted_fixture = f.is_relative() ? base / f : f;
  }
  if (j.contains("lean")) cfg.lean = leanrun::config_from_json(j["lean"], base);
  cfg.workers = j.value("workers", std::size_t{4});
  cfg.max_iterations = j.value("max_iterations", 6);
  return cfg;
}

std::unique_ptr<modelgw::Gateway> make_gateway(const RunConfig& cfg) {
  auto gw = std::make_unique<modelgw::Gateway>();
  if (cfg.scripted_fixture) {
    gw->set_backend(modelgw::Provider::scripted, modelgw::ScriptedBackend::from_file(*cfg.scripted_fixture));
  } else {
    gw->set_backend(modelgw::Provider::scripted, std::make_shared<modelgw::ScriptedBackend>());
  }
  return gw;
}

std::string slug(std::string_view s) {
  std::string out;
  for (unsigned char c : s) out += std::isalnum(c) || c == '-' || c == '_' || c == '.' ? static_cast<char>(c) : '_';
  return out;
}

void write_json(const fs::path& path, const json& j) {
  fs::create_directories(path.parent_path());
  util::write_file_atomic(path, j.dump(2) + "\n");
}

void emit(const std::string& text, const std::string& out) {
  if (out.empty() || out == "-") {
    std::cout << text;
  } else {
    util::write_file_atomic(out, text);
  }
}

std::vector<formalize::Candidate> load_candidates(const fs::path& dir) {
  fs::path root = fs::is_directory(dir / "candidates") ? dir / "candidates" : dir;
  if (!fs::is_directory(root)) throw Error(ErrorKind::io, "candidate directory " + dir.string() + " does not exist");
  std::vector<fs::path> files;
  for (const auto& e : fs::directory_iterator(root)) {
    if (e.path().extension() == ".json") files.push_back(e.path());
  }
  std::sort(files.begin(), files.end());
  std::vector<formalize::Candidate> out;
  for (const auto& f : files) {
    try {
      out.push_back(formalize::candidate_from_json(json::parse(util::read_file(f))));
    } catch (const json::exception& e) {
      throw Error(ErrorKind::parse, f.string() + ": " + e.what());
    }
  }
  return out;
}

std::map<std::string, evalmetrics::OpTree> gold_trees(const std::map<std::string, std::string>& gold) {
  std::map<std::string, evalmetrics::OpTree> out;
  for (const auto& [id, code] : gold) {
    try {
      out.emplace(id, evalmetrics::parse_optree(code));
    } catch (const Error& e) {
      throw Error(e.kind(), "gold statement for " + id + ": " + e.what());
    }
  }
  return out;
}

std::vector<double> parse_thresholds(const std::string& s) {
  std::vector<double> out;
  if (s.empty()) return out;
  std::stringstream ss(s);
  std::string part;
  while (std::getline(ss, part, ',')) {
    try {
      out.push_back(std::stod(part));
    } catch (const std::exception&) {
      throw Error(ErrorKind::invalid_argument, "bad threshold '" + part + "'");
    }
  }
  return out;
}

std::string comparisons_jsonl(const std::vector<evalmetrics::ComparisonRecord>& recs) {
  std::string out;
  for (const auto& r : recs) out += evalmetrics::to_json(r).dump() + "\n";
  return out;
}

hub::Server* g_server = nullptr;

}  // namespace

int main(int argc, char** argv) {
  auto logger = spdlog::stderr_color_mt("proofforge");
  spdlog::set_default_logger(logger);
  spdlog::set_pattern("%H:%M:%S %^%l%$ %v");

  CLI::App app{"proofforge: formalization, proving and evaluation harness"};
  app.require_subcommand(1);
  bool verbose = false;
  app.add_flag("-v,--verbose", verbose, "Debug logging");

  // corpus
  auto* corpus_cmd = app.add_subcommand("corpus", "Corpus utilities");
  corpus_cmd->require_subcommand(1);
  std::string corpus_path, config_path, out_path;
  auto* c_check = corpus_cmd->add_subcommand("check", "Validate a corpus file");
  c_check->add_option("--corpus", corpus_path)->required();
  auto* c_label = corpus_cmd->add_subcommand("label", "Label missing categories with a model");
  c_label->add_option("--corpus", corpus_path)->required();
  c_label->add_option("--models", config_path)->required();
  c_label->add_option("--out", out_path)->required();

  // context
  auto* ctx_cmd = app.add_subcommand("context", "Category context packs");
  ctx_cmd->require_subcommand(1);
  std::string category, repo, packs_dir = "contexts", import_file;
  double ratio = 0.25;
  std::uint64_t seed = 0;
  std::size_t agent_budget = 60;
  auto* ctx_build = ctx_cmd->add_subcommand("build", "Run the documentation agent for one category");
  ctx_build->add_option("--category", category)->required();
  ctx_build->add_option("--repo", repo)->required();
  ctx_build->add_option("--corpus", corpus_path)->required();
  ctx_build->add_option("--models", config_path)->required();
  ctx_build->add_option("--packs", packs_dir, "Pack directory")->capture_default_str();
  ctx_build->add_option("--ratio", ratio)->capture_default_str();
  ctx_build->add_option("--seed", seed)->capture_default_str();
  ctx_build->add_option("--budget", agent_budget)->capture_default_str();
  auto* ctx_import = ctx_cmd->add_subcommand("import", "Store a hand-written pack");
  ctx_import->add_option("file", import_file)->required();
  ctx_import->add_option("--category", category);
  ctx_import->add_option("--packs", packs_dir)->capture_default_str();

  // formalize
  auto* form_cmd = app.add_subcommand("formalize", "Ensemble formalization");
  form_cmd->require_subcommand(1);
  bool zero_shot = false;
  std::string store_dir;
  auto* form_run = form_cmd->add_subcommand("run", "Formalize every problem of a corpus");
  form_run->add_option("--corpus", corpus_path)->required();
  form_run->add_option("--models", config_path)->required();
  form_run->add_option("--out", out_path)->required();
  form_run->add_option("--packs", packs_dir)->capture_default_str();
  form_run->add_option("--store", store_dir, "Also append events to this hub store");
  form_run->add_flag("--zero-shot", zero_shot, "No documentation and a single iteration");

  // prove
  auto* prove_cmd = app.add_subcommand("prove", "Automated proving");
  prove_cmd->require_subcommand(1);
  std::string tasks_path, model_name;
  int turns = 10;
  auto* prove_run = prove_cmd->add_subcommand("run", "One attempt per task");
  prove_run->add_option("--tasks", tasks_path)->required();
  prove_run->add_option("--model", model_name)->required();
  prove_run->add_option("--models", config_path)->required();
  prove_run->add_option("--turns", turns)->check(CLI::IsMember({1, 10}))->capture_default_str();
  prove_run->add_option("--out", out_path)->required();
  prove_run->add_option("--store", store_dir);

  // metrics
  auto* met_cmd = app.add_subcommand("metrics", "Formalization and proving metrics");
  met_cmd->require_subcommand(1);
  std::string gold_path, cand_dir, norm_name = "sum", format_name = "csv", comparisons_path, heatmap_spec,
                                   attempts_dir, zs_path, refined_path;
  int budget = 10, denominator = 0;
  double threshold = 0.9;
  auto* m_gted = met_cmd->add_subcommand("gted", "Compare candidates with gold statements");
  m_gted->add_option("--gold", gold_path)->required();
  m_gted->add_option("--candidates", cand_dir)->required();
  m_gted->add_option("--norm", norm_name)->check(CLI::IsMember({"sum", "max"}))->capture_default_str();
  m_gted->add_option("--out", out_path, "Comparison JSONL (default stdout)");
  auto* m_beq = met_cmd->add_subcommand("beq", "Equivalence checks against gold statements");
  m_beq->add_option("--gold", gold_path)->required();
  m_beq->add_option("--candidates", cand_dir)->required();
  m_beq->add_option("--prover", model_name)->required();
  m_beq->add_option("--models", config_path)->required();
  m_beq->add_option("--budget", budget)->capture_default_str();
  m_beq->add_option("--norm", norm_name)->check(CLI::IsMember({"sum", "max"}))->capture_default_str();
  m_beq->add_option("--out", out_path);
  auto* m_report = met_cmd->add_subcommand("report", "Per-model table from comparison records");
  m_report->add_option("--comparisons", comparisons_path)->required();
  m_report->add_option("--format", format_name)->check(CLI::IsMember({"csv", "json", "markdown"}))->capture_default_str();
  m_report->add_option("--threshold", threshold)->capture_default_str();
  m_report->add_option("--heatmap", heatmap_spec, "Comma-separated thresholds");
  m_report->add_option("--denominator", denominator, "Problems per model (default: records per model)");
  m_report->add_option("--out", out_path);
  auto* m_pass = met_cmd->add_subcommand("pass1", "pass@1 over attempt files");
  m_pass->add_option("--attempts", attempts_dir)->required();
  auto* m_abl = met_cmd->add_subcommand("ablation", "Compile rates, zero-shot against refined");
  m_abl->add_option("--zero-shot", zs_path)->required();
  m_abl->add_option("--refined", refined_path)->required();
  m_abl->add_option("--format", format_name)->check(CLI::IsMember({"csv", "json", "markdown"}))->capture_default_str();
  m_abl->add_option("--denominator", denominator);

  // hub
  int port = 8080;
  std::string min_status = "verified_twice", lean_config;
  auto* serve_cmd = app.add_subcommand("serve", "Serve the annotation API");
  serve_cmd->add_option("--store", store_dir)->required();
  serve_cmd->add_option("--port", port)->capture_default_str();
  serve_cmd->add_option("--corpus", corpus_path, "Load problems into the store first");
  serve_cmd->add_option("--models", config_path, "Config whose lean section drives compiles");
  auto* export_cmd = app.add_subcommand("export", "Print verified annotations as JSONL");
  export_cmd->add_option("--store", store_dir)->required();
  export_cmd->add_option("--min-status", min_status)
      ->check(CLI::IsMember({"draft", "verified_once", "verified_twice"}))
      ->capture_default_str();

  CLI11_PARSE(app, argc, argv);
  if (verbose) spdlog::set_level(spdlog::level::debug);

  try {
    if (c_check->parsed()) {
      auto problems = corpus::ingest_corpus(corpus_path);
      std::map<std::string, int> counts;
      for (const auto& p : problems) {
        counts[std::string(corpus::to_string(p.kind))]++;
        counts[p.category ? std::string(corpus::to_string(*p.category)) : "unlabeled"]++;
      }
      std::cout << problems.size() << " problems";
      for (const auto& [k, n] : counts) std::cout << ", " << k << " " << n;
      std::cout << "\n";
    } else if (c_label->parsed()) {
      auto cfg = load_config(config_path);
      auto gw = make_gateway(cfg);
      auto problems = corpus::ingest_corpus(corpus_path);
      corpus::label_all(problems, *gw, cfg.model(cfg.labeler));
      util::write_file_atomic(out_path, corpus::serialize_corpus(problems));
      spdlog::info("labeled corpus written to {}", out_path);
    } else if (ctx_build->parsed()) {
      auto cat = corpus::parse_category(category);
      if (!cat) throw Error(ErrorKind::invalid_argument, "unknown category '" + category + "'");
      auto cfg = load_config(config_path);
      auto gw = make_gateway(cfg);
      auto problems = corpus::ingest_corpus(corpus_path);
      auto samples = contextkb::sample_for_category(problems, *cat, ratio, seed);
      contextkb::AgentOptions opts;
      opts.budget = agent_budget;
      spdlog::info("building {} context from {} sampled problems", corpus::to_string(*cat), samples.size());
      auto run = contextkb::build_context(*cat, samples, *gw, cfg.model(cfg.agent), repo, opts);
      contextkb::ContextStore store(packs_dir);
      store.put(run.pack);
      json calls = json::array();
      for (const auto& c : run.calls) calls.push_back(contextkb::to_json(c));
      write_json(fs::path(packs_dir) / (std::string(corpus::to_string(*cat)) + ".transcript.json"),
                 {{"calls", calls}, {"transcript", modelgw::transcript_to_json(run.transcript)}});
      spdlog::info("pack {} stored, {} tool calls, checksum {}", corpus::to_string(*cat), run.calls.size(),
                   run.pack.checksum);
    } else if (ctx_import->parsed()) {
      std::optional<corpus::Category> cat;
      if (!category.empty()) {
        cat = corpus::parse_category(category);
        if (!cat) throw Error(ErrorKind::invalid_argument, "unknown category '" + category + "'");
      }
      contextkb::ContextStore store(packs_dir);
      auto pack = store.import_file(import_file, cat);
      std::cout << corpus::to_string(pack.category) << " " << pack.checksum << "\n";
    } else if (form_run->parsed()) {
      auto cfg = load_config(config_path);
      auto gw = make_gateway(cfg);
      auto validator = leanrun::make_validator(cfg.lean);
      auto problems = corpus::ingest_corpus(corpus_path);
      std::unique_ptr<hub::Store> store;
      if (!store_dir.empty()) {
        store = std::make_unique<hub::Store>(store_dir);
        store->set_problems(problems);
      }
      contextkb::ContextStore packs(packs_dir);
      formalize::Options opts;
      opts.max_iterations = cfg.max_iterations;
      if (zero_shot) {
        opts.use_context = false;
        opts.max_iterations = 1;
      }
      fs::create_directories(fs::path(out_path) / "candidates");
      fs::create_directories(fs::path(out_path) / "summaries");
      int valid = 0, total = 0;
      for (const auto& original : problems) {
        auto p = corpus::frame_solve_as_prove(original);
        std::optional<contextkb::ContextPack> pack;
        if (opts.use_context) {
          if (!p.category) {
            throw Error(ErrorKind::invalid_argument, "problem " + p.id + " has no category; run corpus label first");
          }
          pack = contextkb::get_context(*p.category, packs);
        }
        auto res = formalize::run_ensemble(p, cfg.models, pack ? &*pack : nullptr, cfg.model(cfg.summarizer), *gw,
                                           *validator, store.get(), opts, cfg.workers);
        for (const auto& c : res.candidates) {
          write_json(fs::path(out_path) / "candidates" / (slug(p.id) + "." + slug(c.model) + ".json"),
                     formalize::to_json(c));
          ++total;
          valid += c.final_status == formalize::FinalStatus::valid;
        }
        write_json(fs::path(out_path) / "summaries" / (slug(p.id) + ".json"), formalize::to_json(res.summary));
        spdlog::info("{}: {} candidates", p.id, res.candidates.size());
      }
      std::cout << valid << "/" << total << " candidates valid\n";
    } else if (prove_run->parsed()) {
      auto cfg = load_config(config_path);
      auto gw = make_gateway(cfg);
      auto validator = leanrun::make_validator(cfg.lean);
      auto tasks = prover::load_tasks(tasks_path);
      const auto& spec = cfg.model(model_name);
      std::unique_ptr<hub::Store> store;
      if (!store_dir.empty()) store = std::make_unique<hub::Store>(store_dir);
      std::vector<prover::ProofAttempt> attempts(tasks.size());
      util::parallel_for(tasks.size(), cfg.workers, [&](std::size_t i) {
        attempts[i] = turns == 1 ? prover::prove_single_turn(tasks[i], spec, *gw, *validator)
                                 : prover::prove_multi_turn(tasks[i], spec, *gw, *validator, turns);
      });
      for (const auto& a : attempts) {
        auto j = prover::to_json(a);
        write_json(fs::path(out_path) / (slug(a.task_id) + "." + slug(a.model) + ".json"), j);
        if (store) {
          j.erase("transcript");
          store->append(hub::EventKind::attempt_added, j);
        }
      }
      auto p = prover::pass_at_1(attempts);
      std::cout << model_name << " pass@1 " << p.fraction() << " (" << p.percent() << ")\n";
    } else if (m_gted->parsed()) {
      auto norm = norm_name == "max" ? evalmetrics::Normalization::max : evalmetrics::Normalization::sum;
      auto recs = evalmetrics::compare_candidates(load_candidates(cand_dir),
                                                  gold_trees(evalmetrics::load_gold(gold_path)), {}, norm);
      emit(comparisons_jsonl(recs), out_path);
    } else if (m_beq->parsed()) {
      auto cfg = load_config(config_path);
      auto gw = make_gateway(cfg);
      auto validator = leanrun::make_validator(cfg.lean);
      auto gold = evalmetrics::load_gold(gold_path);
      auto cands = load_candidates(cand_dir);
      const auto& spec = cfg.model(model_name);
      std::map<std::pair<std::string, std::string>, bool> beq;
      for (const auto& c : cands) {
        auto g = gold.find(c.problem_id);
        if (g == gold.end() || c.final_status != formalize::FinalStatus::valid) continue;
        auto r = evalmetrics::beq_check(c.final_code, g->second, spec, *gw, *validator, budget);
        beq[{c.model, c.problem_id}] = r.pass;
        spdlog::info("{} {}: forward {} backward {}{}", c.model, c.problem_id, r.forward_proved,
                     r.backward_proved, r.fast_path ? " (identical trees)" : "");
      }
      auto norm = norm_name == "max" ? evalmetrics::Normalization::max : evalmetrics::Normalization::sum;
      emit(comparisons_jsonl(evalmetrics::compare_candidates(cands, gold_trees(gold), beq, norm)), out_path);
    } else if (m_report->parsed()) {
      evalmetrics::AggregateOptions opts;
      opts.threshold = threshold;
      opts.heatmap_thresholds = parse_thresholds(heatmap_spec);
      opts.denominator = denominator;
      auto rows = evalmetrics::aggregate_rows(evalmetrics::load_comparisons(comparisons_path), opts);
      auto fmt = evalmetrics::parse_report_format(format_name);
      if (out_path.empty()) {
        std::cout << evalmetrics::emit_report(rows, fmt, opts.heatmap_thresholds, threshold);
      } else {
        evalmetrics::write_report(out_path, rows, fmt, opts.heatmap_thresholds, threshold);
      }
    } else if (m_pass->parsed()) {
      std::map<std::string, std::vector<prover::ProofAttempt>> by_model;
      std::vector<fs::path> files;
      for (const auto& e : fs::directory_iterator(attempts_dir)) {
        if (e.path().extension() == ".json") files.push_back(e.path());
      }
      std::sort(files.begin(), files.end());
      for (const auto& f : files) {
        auto a = prover::attempt_from_json(json::parse(util::read_file(f)));
        by_model[a.model].push_back(std::move(a));
      }
      for (const auto& [model, attempts] : by_model) {
        auto p = prover::pass_at_1(attempts);
        std::cout << model << "," << p.fraction() << "," << p.percent() << "\n";
      }
    } else if (m_abl->parsed()) {
      evalmetrics::AggregateOptions opts;
      opts.denominator = denominator;
      auto zs = evalmetrics::aggregate_rows(evalmetrics::load_comparisons(zs_path), opts);
      auto rf = evalmetrics::aggregate_rows(evalmetrics::load_comparisons(refined_path), opts);
      std::cout << evalmetrics::emit_ablation(zs, rf, evalmetrics::parse_report_format(format_name));
    } else if (serve_cmd->parsed()) {
      hub::Store store(store_dir);
      if (!corpus_path.empty()) store.set_problems(corpus::ingest_corpus(corpus_path));
      leanrun::Config lean;
      if (!config_path.empty()) lean = load_config(config_path).lean;
      hub::ServerConfig sc;
      sc.port = port;
      hub::Server server(store, leanrun::make_validator(lean), sc);
      g_server = &server;
      std::signal(SIGINT, [](int) {
        if (g_server) g_server->stop();
      });
      std::signal(SIGTERM, [](int) {
        if (g_server) g_server->stop();
      });
      spdlog::info("serving {} on port {}", store_dir, port);
      server.run();
      g_server = nullptr;
    } else if (export_cmd->parsed()) {
      hub::Store store(store_dir);
      std::cout << hub::export_annotations(store, hub::parse_annotation_status(min_status));
    }
  } catch (const Error& e) {
    spdlog::error("{}: {}", to_string(e.kind()), e.what());
    if (verbose && !e.detail().empty()) spdlog::debug("detail: {}", e.detail());
    return 1;
  } catch (const std::exception& e) {
    spdlog::error("{}", e.what());
    return 1;
  }
  return 0;
}
