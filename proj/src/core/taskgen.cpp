#include "core/taskgen.hpp"

#include <fstream>
#include <stdexcept>

#include "json.hpp"

namespace lstr {

Vocab::Vocab() {
  for (int d = 0; d < 10; ++d) tokens_.push_back(std::to_string(d));
  auto add = [&](const std::string& t) {
    tokens_.push_back(t);
    return static_cast<int>(tokens_.size()) - 1;
  };
  plus = add("+");
  minus = add("-");
  times = add("*");
  equals = add("=");
  sep = add(";");
  q_mark = add("<q>");
  think_open = add("<think>");
  think_close = add("</think>");
  ans_mark = add("<ans>");
  eos = add("<eos>");
  pad = add("<pad>");
  for (int i = 0; i < static_cast<int>(tokens_.size()); ++i) ids_[tokens_[i]] = i;
}

int Vocab::id(const std::string& token) const {
  auto it = ids_.find(token);
  if (it == ids_.end()) throw std::invalid_argument("Vocab: unknown token '" + token + "'");
  return it->second;
}

const std::string& Vocab::token(int id) const {
  if (id < 0 || id >= size()) throw std::out_of_range("Vocab: id out of range");
  return tokens_[static_cast<std::size_t>(id)];
}

int Vocab::digit(int d) const {
  if (d < 0 || d > 9) throw std::out_of_range("Vocab: digit out of range");
  return d;
}

int apply_op(const Vocab& v, int op_id, int x, int a) {
  if (op_id == v.plus) return (x + a) % 10;
  if (op_id == v.minus) return ((x - a) % 10 + 10) % 10;
  if (op_id == v.times) return (x * a) % 10;
  throw std::invalid_argument("apply_op: not an operator token");
}

Problem generate_problem(const Vocab& v, int n_steps, Rng& rng) {
  if (n_steps < 1 || n_steps > kMaxChainSteps) {
    throw std::invalid_argument("generate_problem: n_steps out of range");
  }
  const int ops[3] = {v.plus, v.minus, v.times};
  Problem p;
  p.n_steps = n_steps;
  int x = static_cast<int>(rng.next_below(10));
  p.question_tokens = {v.q_mark, v.digit(x)};
  for (int s = 0; s < n_steps; ++s) {
    const int op = ops[rng.next_below(3)];
    const int a = static_cast<int>(rng.next_below(10));
    const int next = apply_op(v, op, x, a);
    p.question_tokens.push_back(v.sep);
    p.question_tokens.push_back(op);
    p.question_tokens.push_back(v.digit(a));
    p.reasoning_tokens.push_back(v.digit(x));
    p.reasoning_tokens.push_back(op);
    p.reasoning_tokens.push_back(v.digit(a));
    p.reasoning_tokens.push_back(v.equals);
    p.reasoning_tokens.push_back(v.digit(next));
    p.reasoning_tokens.push_back(v.sep);
    x = next;
  }
  p.answer_tokens = {v.digit(x)};
  return p;
}

std::vector<int> oracle_answer(const Vocab& v, const Problem& p) {
  const auto& q = p.question_tokens;
  if (q.size() < 2 || q[0] != v.q_mark || !v.is_digit(q[1])) {
    throw std::invalid_argument("oracle_answer: malformed question head");
  }
  if ((q.size() - 2) % 3 != 0) {
    throw std::invalid_argument("oracle_answer: malformed operation list");
  }
  int x = q[1];
  for (std::size_t i = 2; i < q.size(); i += 3) {
    if (q[i] != v.sep || !v.is_operator(q[i + 1]) || !v.is_digit(q[i + 2])) {
      throw std::invalid_argument("oracle_answer: malformed operation triple");
    }
    x = apply_op(v, q[i + 1], x, q[i + 2]);
  }
  return {v.digit(x)};
}

std::vector<Problem> generate_dataset(const Vocab& v, const std::map<int, int>& count_per_steps,
                                      Rng& rng) {
  long total = 0;
  for (const auto& [steps, count] : count_per_steps) {
    if (count < 0) throw std::invalid_argument("generate_dataset: negative count");
    total += count;
  }
  if (total < 1) throw std::invalid_argument("generate_dataset: empty spec");

  // Per-problem derived seeds keep generation order-independent.
  const std::uint64_t base = rng.next_u64();
  std::vector<Problem> out;
  out.reserve(static_cast<std::size_t>(total));
  std::uint64_t index = 0;
  for (const auto& [steps, count] : count_per_steps) {
    for (int i = 0; i < count; ++i) {
      Rng prng(derive_seed(base, index++));
      out.push_back(generate_problem(v, steps, prng));
    }
  }
  rng.shuffle(out);
  return out;
}

void save_dataset_jsonl(const std::string& path, const std::vector<Problem>& problems) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw std::runtime_error("save_dataset_jsonl: cannot open " + path);
  for (const auto& p : problems) {
    nlohmann::ordered_json j;
    j["q"] = p.question_tokens;
    j["r"] = p.reasoning_tokens;
    j["a"] = p.answer_tokens;
    out << j.dump() << "\n";
  }
  if (!out) throw std::runtime_error("save_dataset_jsonl: write failed for " + path);
}

std::vector<Problem> load_dataset_jsonl(const std::string& path, const Vocab& v) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw std::runtime_error("load_dataset_jsonl: cannot open " + path);
  std::vector<Problem> out;
  std::string line;
  std::size_t line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    if (line.empty()) continue;
    nlohmann::json j;
    try {
      j = nlohmann::json::parse(line);
    } catch (const nlohmann::json::exception& e) {
      throw std::runtime_error("load_dataset_jsonl: parse error at line " +
                               std::to_string(line_no) + ": " + e.what());
    }
    Problem p;
    p.question_tokens = j.at("q").get<std::vector<int>>();
    p.reasoning_tokens = j.at("r").get<std::vector<int>>();
    p.answer_tokens = j.at("a").get<std::vector<int>>();
    for (const auto* ids : {&p.question_tokens, &p.reasoning_tokens, &p.answer_tokens}) {
      for (int id : *ids) {
        if (id < 0 || id >= v.size()) {
          throw std::runtime_error("load_dataset_jsonl: token id out of range at line " +
                                   std::to_string(line_no));
        }
      }
    }
    if (p.reasoning_tokens.empty() || p.reasoning_tokens.size() % kTokensPerStep != 0) {
      throw std::runtime_error("load_dataset_jsonl: bad reasoning length at line " +
                               std::to_string(line_no));
    }
    p.n_steps = static_cast<int>(p.reasoning_tokens.size()) / kTokensPerStep;
    if (oracle_answer(v, p) != p.answer_tokens) {
      throw std::runtime_error("load_dataset_jsonl: answer inconsistent with question at line " +
                               std::to_string(line_no));
    }
    out.push_back(std::move(p));
  }
  return out;
}

}  // namespace lstr
