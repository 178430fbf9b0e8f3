#pragma once

#include "mirror/corpus.hpp"
#include "mirror/model.hpp"
#include "mirror/objective.hpp"

#include <cstdint>
#include <iosfwd>
#include <string>

namespace mirror {

class CheckpointError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

inline constexpr char kCheckpointMagic[4] = {'M', 'I', 'R', 'R'};
inline constexpr std::uint32_t kCheckpointVersion = 1;

// Layout (all integers little-endian uint32):
//   "MIRR" | version | config length | config JSON (UTF-8)
//   | token count | { length | UTF-8 token }*      regular tokens, id order
//   | array count | { name length | name | rank | extents... | float32 values }*
struct Checkpoint {
  Model model;
  Vocabulary vocab;
  TrainConfig train;
};

void save_checkpoint(std::ostream& out, const Model& model, const Vocabulary& vocab,
                     const TrainConfig& train);
void save_checkpoint(const std::string& path, const Model& model, const Vocabulary& vocab,
                     const TrainConfig& train);
Checkpoint load_checkpoint(std::istream& in);
Checkpoint load_checkpoint(const std::string& path);

// Hex FNV-1a digest of the checkpoint file bytes.
std::string checkpoint_id(const std::string& path);

std::string to_string(ScaleProfile p);
ScaleProfile parse_profile(const std::string& s);

}  // namespace mirror
