#include "mirror/toy.hpp"

#include "toy_data.hpp"

#include <sstream>

namespace mirror {

std::string_view toy32_jsonl() { return toy_data::kToy32; }
std::string_view toy8_jsonl() { return toy_data::kToy8; }

std::vector<Dialogue> toy_dialogues(std::size_t n) {
  if (n != 32 && n != 8) throw std::invalid_argument("toy corpus comes in sizes 32 and 8");
  std::istringstream in(std::string(n == 32 ? toy32_jsonl() : toy8_jsonl()));
  return read_jsonl_corpus(in);
}

std::vector<Triple> toy_triples(std::size_t n) {
  const auto d = toy_dialogues(n);
  return window_dialogues(d);
}

}  // namespace mirror
