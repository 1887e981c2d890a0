#pragma once

#include <cstddef>
#include <cstdint>
#include <string>
#include <vector>

#include "rtlppa/rng.hpp"

namespace rtlppa {

struct DatasetRecord {
    std::string id;
    std::string source;
    double area = 0.0;
    double delay = 0.0;
    double power = 0.0;
};

struct LoadReport {
    std::vector<DatasetRecord> records;
    std::size_t skipped = 0;
    std::vector<std::string> errors;  // one entry per rejected line
};

// JSONL, one object per line: {"id","source","area","delay","power"}.
// Malformed lines are skipped and reported; zero valid records throws
// EmptyDataset.
LoadReport load_jsonl(const std::string& path);
void save_jsonl(const std::string& path, const std::vector<DatasetRecord>& records);

// Deterministic split: the first llround(train_fraction * M) records (after a
// seeded shuffle) go to train, the rest to validation.
struct Split {
    std::vector<DatasetRecord> train;
    std::vector<DatasetRecord> val;
};
Split split_train_val(const std::vector<DatasetRecord>& records, double train_fraction,
                      std::uint64_t seed);

// Synthesizes `count` modules (adders, mux trees, parity trees, shift
// registers, FSMs, random gate soup) with labels from the proxy scorer.
// Structures are a deterministic function of their sampled configuration, so
// repeated configurations yield byte-identical sources; record ids carry the
// unique per-record suffix.
std::vector<DatasetRecord> synth_toy_dataset(std::size_t count, std::uint64_t seed);

}  // namespace rtlppa
