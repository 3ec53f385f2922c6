#pragma once

#include <stdexcept>
#include <string>

namespace lstr {

class Trainer;

struct CheckpointError : std::runtime_error {
  using std::runtime_error::runtime_error;
};

// Versioned binary container: magic + version, a JSON header carrying the
// config, tensor shape table, RNG state and bookkeeping, then the declared
// tensors as raw little-endian float64 payloads.
struct CheckpointCodec {
  static void save(const std::string& path, const Trainer& t);
  static Trainer load(const std::string& path);
};

}  // namespace lstr
