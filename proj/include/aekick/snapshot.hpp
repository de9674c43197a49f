#pragma once

// Named-array container shared by network and encoder snapshots. Same
// JSON-lines layout as demonstration files: a header object followed by one
// {"name", "rows", "cols", "data"} object per array.

#include <filesystem>
#include <string>
#include <utility>
#include <vector>

#include "aekick/numerics.hpp"
#include "json.hpp"

namespace aekick {

struct ArrayBundle {
  nlohmann::ordered_json meta = nlohmann::ordered_json::object();
  std::vector<std::pair<std::string, Matrix>> arrays;

  const Matrix& get(const std::string& name) const;
  bool contains(const std::string& name) const;
};

inline constexpr int kSnapshotFormatVersion = 1;

void save_bundle(const ArrayBundle& bundle, const std::filesystem::path& path);
ArrayBundle load_bundle(const std::filesystem::path& path);

/// Stores every layer as "<prefix>.layer<i>.weights" / ".biases" and lists
/// the activations under meta["<prefix>.activations"].
void append_net(ArrayBundle& bundle, const std::string& prefix, const DenseNet& net);
DenseNet extract_net(const ArrayBundle& bundle, const std::string& prefix);

}  // namespace aekick
