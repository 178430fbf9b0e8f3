#pragma once

#include "mirror/corpus.hpp"

#include <string_view>
#include <vector>

namespace mirror {

// The bundled synthetic corpora (data/toy), compiled in so that the
// verification suite needs no files at run time.
std::string_view toy32_jsonl();
std::string_view toy8_jsonl();

// 32 (or the first 8) three-turn dialogues.
std::vector<Dialogue> toy_dialogues(std::size_t n = 32);
std::vector<Triple> toy_triples(std::size_t n = 32);

}  // namespace mirror
