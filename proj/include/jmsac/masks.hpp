#pragma once

#include <algorithm>
#include <stdexcept>
#include <string>
#include <vector>

#include "jmsac/rng.hpp"
#include "jmsac/tokenizer.hpp"

namespace jmsac {

enum class MaskPattern { TemporalBlock, Random, Checkerboard };

inline MaskPattern mask_pattern_from_string(const std::string& s) {
    if (s == "temporal-block") return MaskPattern::TemporalBlock;
    if (s == "random") return MaskPattern::Random;
    if (s == "checkerboard") return MaskPattern::Checkerboard;
    throw std::invalid_argument("unknown masking pattern: " + s);
}

// Partition of token indices into visible and masked sets, plus the masked
// frame choice per modality that produced it.
struct MaskSpec {
    MaskPattern pattern = MaskPattern::TemporalBlock;
    double rho = 0.5;
    std::vector<int64_t> mask_idx, keep_idx;              // canonical token rows
    std::vector<std::vector<int>> masked_frames;          // per active modality
};

inline int mask_length(double rho, int t_total) {
    const int t_mask = static_cast<int>(rho * t_total);
    if (t_mask < 1 || t_mask >= t_total)
        throw std::invalid_argument("masking ratio yields invalid T_Mask");
    return t_mask;
}

// Checkerboard pre-adjustment frame set: frames where (modality index +
// frame) is even.
inline std::vector<int> checkerboard_frames(int mod_index, int t_total) {
    std::vector<int> f;
    for (int t = 0; t < t_total; ++t)
        if ((mod_index + t) % 2 == 0) f.push_back(t);
    return f;
}

namespace detail {

inline MaskSpec finish_mask(const TokenLayout& layout, MaskPattern pattern, double rho,
                            std::vector<std::vector<int>> masked_frames) {
    MaskSpec spec;
    spec.pattern = pattern;
    spec.rho = rho;
    spec.masked_frames = std::move(masked_frames);
    std::vector<char> masked(static_cast<size_t>(layout.total), 0);
    for (size_t m = 0; m < layout.active.size(); ++m)
        for (int t : spec.masked_frames[m])
            for (int64_t r : layout.modality_frame_rows(m, t)) masked[static_cast<size_t>(r)] = 1;
    for (int64_t i = 0; i < layout.total; ++i)
        (masked[static_cast<size_t>(i)] ? spec.mask_idx : spec.keep_idx).push_back(i);
    if (spec.mask_idx.empty()) throw std::logic_error("mask: empty masked set");
    return spec;
}

} // namespace detail

// Per modality, one uniformly random contiguous frame window of length
// floor(rho * T); all of that modality's tokens in those frames are masked.
inline MaskSpec sample_temporal_block_mask(const TokenLayout& layout, double rho, Rng& rng) {
    const int t_mask = mask_length(rho, layout.t_total);
    std::vector<std::vector<int>> frames(layout.active.size());
    for (size_t m = 0; m < layout.active.size(); ++m) {
        const int start = static_cast<int>(rng.below(static_cast<uint64_t>(layout.t_total - t_mask + 1)));
        for (int t = start; t < start + t_mask; ++t) frames[m].push_back(t);
    }
    return detail::finish_mask(layout, MaskPattern::TemporalBlock, rho, std::move(frames));
}

// random: T_Mask frames per modality without contiguity. checkerboard:
// parity rule on (modality + frame), then deterministic lowest-index
// trimming/padding to exactly T_Mask frames.
inline MaskSpec sample_pattern_mask(MaskPattern pattern, const TokenLayout& layout, double rho,
                                    Rng& rng) {
    if (pattern == MaskPattern::TemporalBlock) return sample_temporal_block_mask(layout, rho, rng);
    const int t_mask = mask_length(rho, layout.t_total);
    std::vector<std::vector<int>> frames(layout.active.size());
    for (size_t m = 0; m < layout.active.size(); ++m) {
        if (pattern == MaskPattern::Random) {
            std::vector<int> pool(static_cast<size_t>(layout.t_total));
            for (int t = 0; t < layout.t_total; ++t) pool[static_cast<size_t>(t)] = t;
            for (int i = 0; i < t_mask; ++i) {
                const size_t j = i + static_cast<size_t>(rng.below(pool.size() - i));
                std::swap(pool[static_cast<size_t>(i)], pool[j]);
            }
            frames[m].assign(pool.begin(), pool.begin() + t_mask);
            std::sort(frames[m].begin(), frames[m].end());
        } else {
            std::vector<int> sel = checkerboard_frames(static_cast<int>(m), layout.t_total);
            if (static_cast<int>(sel.size()) > t_mask) {
                sel.resize(static_cast<size_t>(t_mask));
            } else if (static_cast<int>(sel.size()) < t_mask) {
                std::vector<char> in(static_cast<size_t>(layout.t_total), 0);
                for (int t : sel) in[static_cast<size_t>(t)] = 1;
                for (int t = 0; t < layout.t_total && static_cast<int>(sel.size()) < t_mask; ++t)
                    if (!in[static_cast<size_t>(t)]) sel.push_back(t);
                std::sort(sel.begin(), sel.end());
            }
            frames[m] = std::move(sel);
        }
    }
    return detail::finish_mask(layout, pattern, rho, std::move(frames));
}

// Downstream split: history frames visible, future frames masked, for every
// modality.
inline MaskSpec future_mask(const TokenLayout& layout, int t_hist) {
    if (t_hist < 1 || t_hist >= layout.t_total)
        throw std::invalid_argument("future_mask: invalid history length");
    std::vector<std::vector<int>> frames(layout.active.size());
    for (auto& f : frames)
        for (int t = t_hist; t < layout.t_total; ++t) f.push_back(t);
    MaskSpec spec = detail::finish_mask(layout, MaskPattern::TemporalBlock,
                                        static_cast<double>(layout.t_total - t_hist) /
                                            static_cast<double>(layout.t_total),
                                        std::move(frames));
    return spec;
}

} // namespace jmsac
