#pragma once

// Versioned binary checkpoint: magic, format version, config snapshot,
// vocabulary hashes, training progress and parameter tables in declared order.

#include "mclet/config.hpp"
#include "mclet/kgdata.hpp"
#include "mclet/model.hpp"

#include <cstdint>
#include <filesystem>
#include <stdexcept>

namespace mclet::ckpt {

struct VocabFingerprints {
    std::uint64_t entities = 0;
    std::uint64_t relations = 0;
    std::uint64_t types = 0;
    std::uint64_t clusters = 0;

    bool operator==(const VocabFingerprints&) const = default;
};

VocabFingerprints fingerprints(const kg::KnowledgeGraph& kg);

struct Checkpoint {
    TrainConfig config;
    VocabFingerprints vocab;
    std::uint64_t corpus = 0;
    int epoch = 0;
    double best_valid_mrr = 0.0;
    model::ModelParameters params;
};

class IncompatibleCheckpoint : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

void save_checkpoint(const Checkpoint& checkpoint, const std::filesystem::path& path);
/// Throws io::FormatError on a bad header or table layout.
Checkpoint load_checkpoint(const std::filesystem::path& path);

/// Throws IncompatibleCheckpoint if any vocabulary hash or table shape
/// disagrees with `kg`.
void check_compatible(const Checkpoint& checkpoint, const kg::KnowledgeGraph& kg);

} // namespace mclet::ckpt
