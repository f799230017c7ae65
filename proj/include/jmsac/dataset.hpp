#pragma once

#include <string>
#include <vector>

#include "jmsac/config.hpp"
#include "jmsac/preprocess.hpp"
#include "jmsac/tensor.hpp"

namespace jmsac::data {

// One preprocessed window: model-ready arrays plus ground-truth labels.
// Shapes: V [T,3,v,v], R [T,1,a,r], L [T,1,h,w], p [T,2], rf_db [T,K],
// pos [T,2], beam [T], spec_db [T,K].
struct Window {
    TensorF V, R, L, p, rf_db, pos, beam, spec_db;
};

struct WindowMeta {
    std::string file;
    bool train = false;
    int sequence = 0;
    int offset = 0;
    uint32_t crc = 0;
};

struct Manifest {
    nlohmann::json config_echo;
    std::map<std::string, uint64_t> seeds;
    std::vector<WindowMeta> windows;
    prep::RfStats rf_stats;
    std::string config_hash;
    std::string build;

    std::vector<const WindowMeta*> split(bool train) const {
        std::vector<const WindowMeta*> v;
        for (const auto& w : windows)
            if (w.train == train) v.push_back(&w);
        return v;
    }
};

// Renders, preprocesses and persists every window; writes manifest.json.
// Deterministic per master seed; per-sequence seeds are scenario_seed xor
// sequence index.
void generate_dataset(const cfg::RunConfig& cfg, const std::string& out_dir);

Manifest load_manifest(const std::string& dir);
Window load_window(const std::string& dir, const WindowMeta& meta);

// All windows of a split, loaded into memory in manifest order.
std::vector<Window> load_split(const std::string& dir, const Manifest& m, bool train);

} // namespace jmsac::data
