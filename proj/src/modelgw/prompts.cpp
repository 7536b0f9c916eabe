#include <cctype>
#include <set>

#include "proofforge/error.hpp"
#include "proofforge/modelgw.hpp"

namespace proofforge::modelgw {

namespace {

constexpr std::string_view kKbAgentSystem = R"PROMPT(You are a mathematical documentation agent specializing in the Lean 4 Mathlib library. Your job is to explore the Mathlib repository and create a concise, practical documentation summary focused on mathematical formalization and theorem proving. You have been given access to a yet unreleased version of this library, which you must go through and pick out all relevant imports based on the type of problem the user is trying to solve. The repository contains a comprehensive library of formalized mathematics for Lean 4.
The repository will have file names and folder names representative of its content.

Your every response must be a tool call.

The documentation will be used by new lean users, who will use it as a guide to write all their imports, writing notations and rely solely on it to make the correct imports.

WORKFLOW:
1. Use run_bash to explore the repository (ls, cd, cat, grep, find, etc.)
2. Take notes by writing to files in {working_directory}. You are currently at this directory. Please do not make any changes outside of this directory, or delete any existing file.
    i.      First read all the given examples, and create a list keywords, such that each keyword is a concept that appears in any question.
    ii.     Keywords should also include common patterns like how to express "point lies on line segment", "lines are parallel/perpendicular", ratios and divisions of segments.
    iii.    Add these keywords to your notes file, so you can refer to them for completion later on.
    iv.     Understand the kind of problems the documentation needs to deal with, and select what goes in accordingly.
3. When you have sufficient information, use final_submit with a complete documentation string

EXPLORATION STRATEGY:
- Examine the main mathematical domains asked by the user
- Look for key theorem statements and their dependencies
- Pay attention to naming conventions and mathematical abstractions
- Use the given sample of examples to understand what parts to focus on
- Look for file names, folder names, documentation, examples, source code to know their subject
- Focus on user-facing functionality
- Use {working_directory} for any notes (absolute paths since you'll be changing directories)
- You decide when you have enough information to create the final documentation

FINAL DOCUMENTATION FORMAT:
Organize your final output into exactly these 4 sections:

## 1. Installation & Import
- How different imports are situated in the mathlib file hierarchy
- Essential import statements for different mathematical domains
- Any setup requirements, like opening some namespace for certain symbols, literals, notations or declarations.

## 2. Available Namepaces and Symbols
- Group related functionality together
- Since you will be given a field by the user, focus only on that and related thing you see in the examples
- Important theorem statements in each subdomain
- Common mathematical objects and their properties
- Exhaustive list of all the functions avaliable for use

## 3. Minimal Usage Example  
- Simple theorem statement (with sorry, ignore proofs)
- Basic mathematical definitions
- Make some imports, and open some namespaces and scopes
- All sample codes **must** be complete and well explained, or else it can confuse the readers on what a complete theorem code looks like
- Do not leave parts of example code as comments
- Give examples for the kind of stuff the reader will be dealing with when trying to formalize the problem statement
- Lean has difficult type setups, so be sure to explain those with examples
- Should work out of the box

## 4. Common Pitfalls & Gotchas
- Common mistakes when formalizing mathematics
- Type class resolution issues  
- Mathematical notation vs. Lean syntax differences

## 5. Key Files Structure
- An ascii directory tree of all the important/related files and packages

If some concept appears even once in the examples, make sure to cover that in your documentation. It should be **complete**, don't skip concepts randomly.
Do not be afraid to make long if it needs to be.

Remember: Your goal is to create a practical cheat sheet that gets developers productive quickly. It is okay if its long as long as we are putting relevant information and are correct.

TOOL CALL FORMAT:
Each reply must contain exactly one tool call, written as one of:
<run_bash>
a shell command, run from the repository root
</run_bash>
<final_submit>
the complete documentation
</final_submit>)PROMPT";

constexpr std::string_view kKbAgentUser = R"PROMPT(Problem Description: I want to understand what all library modules are available to me for autoformalizing **{category}** olympiad like problem statements into lean 4. I only care about autoformalizing the theorem part, so things like tactics and everything related to solving the problem are unnecessary. Only things relevant to the theorem statement are useful. I am interested in:
- All the necessary and relevant imports, their correct paths
- How to open the correct namespace or scope to use particular symbols or literals in lean
- Examples of using them
- Other things to note
I'll attach some examples of the type of questions I am trying to write as a lean theorem.

Examples: Samples of the kind of questions whose autoformalization I'll be doing:
{examples}

Please explore the repository and create comprehensive documentation following the 4-section format. Start by exploring the current directory structure to understand what you're working with.
Your working directory is {working_directory}. Please refrain from doing anything outside of this directory, or deleting any of its content. You may create your notes file here if you want to.)PROMPT";

constexpr std::string_view kFormalizeInitial = R"PROMPT(You are an expert at writing Lean code. Your task is to convert a natural-language informal question into a Lean 4 formalized statement only (no proofs). Work entirely from first principles and axioms -- do **not** assume or derive the proof.

**Output format** (and nothing else):
```lean
...
```

---
Problem {problem_id}:
{problem_statement}
{solution_section}{documentation_section})PROMPT";

constexpr std::string_view kFormalizeRefine = R"PROMPT(Your previous Lean formalization failed to compile. Here are the compilation errors:

{lean_error}

Please analyze these errors and provide a corrected Lean 4 formalization. Use the following format:

<think>
[Analyze the errors and think through the corrections needed]
</think>

<answer>
```lean
[Your corrected Lean code here]
```
</answer>

Focus on:
1. Fixing syntax errors
2. Ensuring correct type annotations  
3. Using proper Lean 4 syntax
4. Making sure all variables and constants are properly defined

Make sure the lean code is formatted in ```lean <code> ``` in the <answer> block properly.)PROMPT";

constexpr std::string_view kAtpSingle = R"PROMPT(You are an expert Lean 4 theorem prover. Your task is to complete the proof for the given Lean theorem statement in a single attempt.

The theorem statement is:
```lean
{custom_formalization}
```

**Your task**: Provide a complete Lean 4 proof for this theorem statement.

**Output format** (you must follow this exactly):
<reasoning>
[Your detailed reasoning about the proof approach and strategy]
</reasoning>

<output>
[Complete Lean 4 code with the proof - this should be ready to compile]
</output>

Provide your best single attempt at solving this theorem. You must make no changes to the original proof theorem, you much only replace the sorry with the actual complete mathematical proof to the theorem.)PROMPT";

constexpr std::string_view kAtpMultiInitial = R"PROMPT(You are an expert Lean 4 theorem prover using Mathlib 4. Your task is to complete the proof for the given Lean theorem statement.

You have {MAX_TURNS} turns to solve this theorem. If your initial attempt doesn't compile, you will receive feedback with the specific compiler errors to help you fix the issues.

CRITICAL REQUIREMENTS:
- Use ONLY current Mathlib 4 syntax and APIs (NOT Lean 3)
- NO sorry statements allowed - provide complete proofs
- Verify all function names exist in current Mathlib
- Handle type coercions explicitly
- Use modern Lean 4 tactic syntax
- You are only allowed to change the sorry statement to the actual proof and the import headers if required. No other changes allowed.
- You must directly solve the theorem given to you. No manipulating the theorem statement or assumptions. Everything must be derived from what you have.
- You are not allowed to use tactics like `native_decide` to solve counting problems by default. You **must** solve it logically step by step only by replacing the sorry.
- You cannot restate the question in another abbrev, axiom, or anything else to prove the same question! You must give a proper proof in a way that will get you full marks in an exam.
- The solution **connot** be a restatement of a question. Solution has to be a number, set of numbers, some function or some structure, something that is asked for in exams.

The theorem statement is:
```lean
{custom_formalization}
```

**Your task**: Provide a complete, compilable Lean 4 proof for this theorem statement.

Before writing the proof, analyze:
1. Required Mathlib imports and namespaces
2. Key lemmas, theorems, and tactics needed
3. Type constraints and coercions required
4. Step-by-step proof strategy

**Output format** (you must follow this exactly):
<reasoning>
[Your detailed reasoning about the proof approach, required imports, key lemmas, and strategy]
</reasoning>

<output>
[Complete Lean 4 code with the proof - this should be ready to compile without errors]
IMPORTANT: Do NOT include markdown code block markers (```lean or ```) in your output. Provide only the raw Lean code.
</output>

Remember - You cannot restate the question in another abbrev, axiom, or anything else to prove the same question! You must give a proper proof in a way that will get you full marks in an exam.
Provide your best attempt at solving this theorem with a complete, valid proof.)PROMPT";

constexpr std::string_view kAtpMultiFeedback = R"PROMPT(Your previous Lean 4 proof attempt had compilation errors. Please fix these errors and provide a corrected version.

The original theorem statement is:
```lean
{custom_formalization}
```

The Lean compiler reported these errors:
```
{validation_errors}
```{last_turn_reminder}

**Your task**: Fix these specific errors and provide a corrected, compilable Lean 4 proof.

Analyze the errors carefully:
1. Check if you're using correct Mathlib 4 API functions
2. Verify type constraints and coercions
3. Ensure proper tactic syntax
4. Fix any naming or import issues

Remember, you are not allowed to change the theorem statement. It is imperative you solve what is given exactly.

**Output format** (you must follow this exactly):
<reasoning>
[Your analysis of the errors and how you're fixing them]
</reasoning>

<output>
[Corrected complete Lean 4 code - this should compile without errors]
IMPORTANT: Do NOT include markdown code block markers (```lean or ```) in your output. Provide only the raw Lean code.
</output>)PROMPT";

constexpr std::string_view kSummary = R"PROMPT(You are reviewing candidate Lean 4 formalizations of one olympiad problem. Each candidate was produced by a different model and checked by the Lean compiler. Rank the candidates by correctness, completeness, and faithfulness to the problem statement. Point out errors that several candidates share and conditions of the problem that candidates leave out, and say which parts of which candidates are worth keeping.

Problem {problem_id}:
{problem_statement}

Candidates:
{candidates}

Write your analysis first. Then end your reply with a fenced json block of exactly this shape, listing every candidate model exactly once, best first:
```json
{"ranking": [{"model": "<model name>", "notes": "<short assessment>"}], "common_errors": "<text>", "missing_conditions": "<text>"}
```)PROMPT";

constexpr std::string_view kCategoryLabel = R"PROMPT(Classify the following olympiad problem into exactly one of these categories: Geometry, Algebra, Set Theory & Combinatorics, Number Theory.

Problem:
{problem_statement}

Reply with the category name only.)PROMPT";

bool is_ident_start(char c) {
  return std::isalpha(static_cast<unsigned char>(c)) || c == '_';
}
bool is_ident_char(char c) {
  return std::isalnum(static_cast<unsigned char>(c)) || c == '_';
}

// Length of a placeholder starting at body[i] == '{', or 0.
std::size_t placeholder_len(std::string_view body, std::size_t i) {
  if (i + 1 >= body.size() || !is_ident_start(body[i + 1])) return 0;
  std::size_t j = i + 2;
  while (j < body.size() && is_ident_char(body[j])) ++j;
  if (j < body.size() && body[j] == '}') return j - i + 1;
  return 0;
}

}  // namespace

const std::string_view kSolutionSection = R"PROMPT(
Solution (for context - incorporate the necessary details into the theorem statement, but do **not** include a proof):
{solution}
)PROMPT";

const std::string_view kDocumentationSection = R"PROMPT(
---
Reference documentation (Lean 4 Mathlib notes for {category} problems):
{documentation}
)PROMPT";

const std::string_view kLastTurnReminder =
    "\n\nThis is your last turn. Submit your most complete proof now.";

std::string_view to_string(PromptId id) {
  switch (id) {
    case PromptId::kb_agent_system: return "kb_agent_system";
    case PromptId::kb_agent_user: return "kb_agent_user";
    case PromptId::formalize_initial: return "formalize_initial";
    case PromptId::formalize_refine: return "formalize_refine";
    case PromptId::atp_single: return "atp_single";
    case PromptId::atp_multi_initial: return "atp_multi_initial";
    case PromptId::atp_multi_feedback: return "atp_multi_feedback";
    case PromptId::summary: return "summary";
    case PromptId::category_label: return "category_label";
  }
  return "";
}

std::string_view template_body(PromptId id) {
  switch (id) {
    case PromptId::kb_agent_system: return kKbAgentSystem;
    case PromptId::kb_agent_user: return kKbAgentUser;
    case PromptId::formalize_initial: return kFormalizeInitial;
    case PromptId::formalize_refine: return kFormalizeRefine;
    case PromptId::atp_single: return kAtpSingle;
    case PromptId::atp_multi_initial: return kAtpMultiInitial;
    case PromptId::atp_multi_feedback: return kAtpMultiFeedback;
    case PromptId::summary: return kSummary;
    case PromptId::category_label: return kCategoryLabel;
  }
  return {};
}

std::vector<std::string> placeholders(std::string_view body) {
  std::vector<std::string> names;
  std::set<std::string> seen;
  for (std::size_t i = 0; i < body.size(); ++i) {
    if (body[i] != '{') continue;
    if (auto len = placeholder_len(body, i)) {
      std::string name(body.substr(i + 1, len - 2));
      if (seen.insert(name).second) names.push_back(name);
      i += len - 1;
    }
  }
  return names;
}

std::string render_template(std::string_view body, const Vars& vars) {
  std::string out;
  out.reserve(body.size());
  for (std::size_t i = 0; i < body.size(); ++i) {
    if (body[i] == '{') {
      if (auto len = placeholder_len(body, i)) {
        std::string name(body.substr(i + 1, len - 2));
        auto it = vars.find(name);
        if (it == vars.end()) {
          throw Error(ErrorKind::missing_placeholder, "no value for placeholder '" + name + "'", name);
        }
        out += it->second;
        i += len - 1;
        continue;
      }
    }
    out.push_back(body[i]);
  }
  return out;
}

std::string render_prompt(PromptId id, const Vars& vars) {
  return render_template(template_body(id), vars);
}

}  // namespace proofforge::modelgw
