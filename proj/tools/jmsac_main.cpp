#include <cstdio>
#include <iostream>
#include <string>
#include <thread>

#include <CLI11.hpp>

#include "jmsac/blas.hpp"
#include "jmsac/pipeline.hpp"
#include "jmsac/version.hpp"

namespace {

struct CommonArgs {
    std::string config;
    std::string out;
    std::string checkpoint;
    std::string dataset;
    std::string heads_dir;
    uint64_t seed = 0;
    bool seed_set = false;
    int threads = 0;
    bool deterministic = false;
};

jmsac::cfg::RunConfig resolve(const CommonArgs& a) {
    auto cfg = jmsac::cfg::load_config(a.config);
    if (a.seed_set) {
        auto doc = jmsac::cfg::to_json(cfg);
        doc["seed"] = a.seed;
        cfg = jmsac::cfg::parse_config(doc);
    }
    if (a.deterministic)
        jmsac::blas::set_threads(1);
    else if (a.threads > 0)
        jmsac::blas::set_threads(a.threads);
    else
        jmsac::blas::set_threads(static_cast<int>(std::thread::hardware_concurrency()));
    return cfg;
}

std::string pick(const std::string& flag_value, const std::string& cfg_value, const char* what) {
    if (!flag_value.empty()) return flag_value;
    if (!cfg_value.empty()) return cfg_value;
    throw jmsac::pipeline::MissingInputError(std::string("no path given for ") + what);
}

} // namespace

int main(int argc, char** argv) {
    CLI::App app{"JEPA-style multimodal pretraining and PHY task pipeline"};
    app.set_version_flag("--version", jmsac::kBuildId);
    app.require_subcommand(1);

    CommonArgs a;
    auto add_common = [&](CLI::App* sub, bool needs_config = true) {
        auto* c = sub->add_option("--config", a.config, "run configuration JSON");
        if (needs_config) c->required();
        sub->add_option("--out", a.out, "output directory");
        sub->add_option("--checkpoint", a.checkpoint, "backbone checkpoint path");
        sub->add_option("--dataset", a.dataset, "dataset directory");
        sub->add_option("--heads", a.heads_dir, "head checkpoint directory");
        sub->add_option("--seed", a.seed, "master seed override")->each([&](const std::string&) {
            a.seed_set = true;
        });
        sub->add_option("--threads", a.threads, "worker thread count");
        sub->add_flag("--deterministic", a.deterministic, "force single-threaded numerics");
    };

    auto* cmd_generate = app.add_subcommand("generate", "generate a synthetic dataset");
    add_common(cmd_generate);
    auto* cmd_pretrain = app.add_subcommand("pretrain", "masked latent pretraining");
    add_common(cmd_pretrain);
    auto* cmd_heads = app.add_subcommand("train-heads", "train task heads on a frozen backbone");
    add_common(cmd_heads);
    auto* cmd_eval = app.add_subcommand("evaluate", "evaluate on the test split");
    add_common(cmd_eval);
    auto* cmd_ablate = app.add_subcommand("ablate", "run the configured ablation matrix");
    add_common(cmd_ablate);
    auto* cmd_gradcheck = app.add_subcommand("grad-check", "finite-difference gradient checks");
    cmd_gradcheck->add_option("--threads", a.threads, "worker thread count");
    cmd_gradcheck->add_flag("--deterministic", a.deterministic, "force single-threaded numerics");

    CLI11_PARSE(app, argc, argv);

    try {
        if (cmd_gradcheck->parsed()) {
            jmsac::blas::set_threads(a.deterministic ? 1 : std::max(1, a.threads));
            return jmsac::pipeline::run_gradcheck(std::cout) ? 0 : 3;
        }
        const auto cfg = resolve(a);
        if (cmd_generate->parsed()) {
            jmsac::pipeline::run_generate(cfg, pick(a.out, cfg.paths.dataset, "dataset output"));
        } else if (cmd_pretrain->parsed()) {
            const auto ds = pick(a.dataset, cfg.paths.dataset, "dataset");
            const auto out = pick(a.out, cfg.paths.out, "output");
            const auto res = jmsac::pipeline::run_pretrain(cfg, ds, out);
            std::printf("pretrain done: first epoch loss %.6g, final %.6g, checkpoint %s\n",
                        res.first_epoch_loss, res.final_epoch_loss, res.checkpoint_path.c_str());
        } else if (cmd_heads->parsed()) {
            const auto ds = pick(a.dataset, cfg.paths.dataset, "dataset");
            const auto bk = cfg.heads.untrained_backbone
                                ? std::string("(untrained)")
                                : pick(a.checkpoint, cfg.paths.backbone, "backbone checkpoint");
            const auto out = pick(a.out, cfg.paths.heads, "head output");
            jmsac::pipeline::run_train_heads(cfg, ds, bk, out);
            std::printf("train-heads done: checkpoints in %s\n", out.c_str());
        } else if (cmd_eval->parsed()) {
            const auto ds = pick(a.dataset, cfg.paths.dataset, "dataset");
            const auto bk = cfg.heads.untrained_backbone
                                ? std::string("(untrained)")
                                : pick(a.checkpoint, cfg.paths.backbone, "backbone checkpoint");
            const auto hd = pick(a.heads_dir, cfg.paths.heads, "head checkpoints");
            const auto out = pick(a.out, cfg.paths.out, "output");
            const auto rep = jmsac::pipeline::run_evaluate(cfg, ds, bk, hd, out);
            std::cout << rep.to_json().dump(2) << "\n";
        } else if (cmd_ablate->parsed()) {
            jmsac::pipeline::run_ablate(cfg, pick(a.out, cfg.paths.out, "output"));
        }
    } catch (const jmsac::pipeline::MissingInputError& e) {
        std::fprintf(stderr, "error: %s\n", e.what());
        return 2;
    } catch (const jmsac::pipeline::NumericalError& e) {
        std::fprintf(stderr, "error: %s\n", e.what());
        return 3;
    } catch (const std::invalid_argument& e) {
        std::fprintf(stderr, "error: %s\n", e.what());
        return 1;
    } catch (const std::exception& e) {
        std::fprintf(stderr, "error: %s\n", e.what());
        return 2;
    }
    return 0;
}
