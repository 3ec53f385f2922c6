#pragma once

#include <map>
#include <string>
#include <vector>

#include "core/rng.hpp"

namespace lstr {

// Fixed 21-token vocabulary: digits 0-9, the three mod-10 operators, "=", ";",
// and the control markers. Ids are dense and stable: digits take 0..9.
class Vocab {
 public:
  Vocab();

  int id(const std::string& token) const;  // throws std::invalid_argument on unknown token
  const std::string& token(int id) const;  // throws std::out_of_range
  int size() const { return static_cast<int>(tokens_.size()); }

  int digit(int d) const;  // d in 0..9
  bool is_digit(int id) const { return id >= 0 && id <= 9; }
  bool is_operator(int id) const { return id == plus || id == minus || id == times; }

  int plus = -1, minus = -1, times = -1, equals = -1, sep = -1;
  int q_mark = -1, think_open = -1, think_close = -1, ans_mark = -1, eos = -1, pad = -1;

 private:
  std::vector<std::string> tokens_;
  std::map<std::string, int> ids_;
};

// One synthetic mod-10 arithmetic chain. The question carries the initial
// value and the operation list; the reasoning tokens spell out every step as
// "a op b = c ;"; the answer is the final value.
struct Problem {
  std::vector<int> question_tokens;   // <q> x0 ; op a ; op a ...
  std::vector<int> reasoning_tokens;  // kTokensPerStep tokens per step
  std::vector<int> answer_tokens;     // single digit
  int n_steps = 0;
};

inline constexpr int kMaxChainSteps = 16;
inline constexpr int kTokensPerStep = 6;

int apply_op(const Vocab& v, int op_id, int x, int a);  // mod-10 arithmetic

Problem generate_problem(const Vocab& v, int n_steps, Rng& rng);

// Ground-truth answer from the question alone, independent of the stored
// reasoning tokens. Throws std::invalid_argument on malformed questions.
std::vector<int> oracle_answer(const Vocab& v, const Problem& p);

// Seed-deterministic shuffled dataset with the requested per-length counts.
std::vector<Problem> generate_dataset(const Vocab& v, const std::map<int, int>& count_per_steps,
                                      Rng& rng);

// Line-delimited JSON: {"q": [...], "r": [...], "a": [...]}.
void save_dataset_jsonl(const std::string& path, const std::vector<Problem>& problems);
std::vector<Problem> load_dataset_jsonl(const std::string& path, const Vocab& v);

}  // namespace lstr
