#pragma once

#include <ostream>
#include <stdexcept>
#include <string>

#include "jmsac/dataset.hpp"
#include "jmsac/heads.hpp"
#include "jmsac/jepa.hpp"
#include "jmsac/metrics.hpp"

namespace jmsac::pipeline {

// Error taxonomy mapped to CLI exit codes: invalid_argument -> 1,
// MissingInputError -> 2, NumericalError -> 3.
struct MissingInputError : std::runtime_error {
    using std::runtime_error::runtime_error;
};
struct NumericalError : std::runtime_error {
    using std::runtime_error::runtime_error;
};

using BackboneF = JepaModel<float>;

BackboneF build_backbone(const cfg::RunConfig& cfg);

// Checkpoint contents: student and teacher parameters plus optimizer state.
void save_backbone(BackboneF& model, AdamW<float>* opt, const std::string& path);
void load_backbone(BackboneF& model, AdamW<float>* opt, const std::string& path);
uint32_t backbone_checksum(BackboneF& model);

WindowInputs<float> to_inputs(const data::Window& w, const prep::RfStats& stats);

struct PretrainResult {
    std::vector<double> epoch_loss;
    double first_epoch_loss = 0.0;
    double final_epoch_loss = 0.0;
    std::string checkpoint_path;
};

PretrainResult run_pretrain(const cfg::RunConfig& cfg, const std::string& dataset_dir,
                            const std::string& out_dir);

struct HeadTrainResult {
    uint32_t backbone_hash_before = 0;
    uint32_t backbone_hash_after = 0;
    std::vector<double> loc_loss, beam_loss, rssi_loss;
};

HeadTrainResult run_train_heads(const cfg::RunConfig& cfg, const std::string& dataset_dir,
                                const std::string& backbone_path, const std::string& out_dir);

metrics::EvalReport run_evaluate(const cfg::RunConfig& cfg, const std::string& dataset_dir,
                                 const std::string& backbone_path, const std::string& heads_dir,
                                 const std::string& out_dir);

void run_generate(const cfg::RunConfig& cfg, const std::string& out_dir);

void run_ablate(const cfg::RunConfig& cfg, const std::string& out_dir);

// Finite-difference sweep over every layer and composite; prints one line per
// check. Returns true when every max relative error is below 1e-4.
bool run_gradcheck(std::ostream& os);

} // namespace jmsac::pipeline
