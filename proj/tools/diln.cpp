// Command line front end: synthetic corpus generation, batch/stochastic
// training, held-out evaluation and exports.

#include <cstdio>
#include <filesystem>
#include <string>
#include <vector>

#include <CLI11.hpp>

#include "diln/batch_infer.hpp"
#include "diln/corpus.hpp"
#include "diln/errors.hpp"
#include "diln/eval.hpp"
#include "diln/exports.hpp"
#include "diln/generative.hpp"
#include "diln/model.hpp"
#include "diln/stochastic_infer.hpp"
#include "diln/vb_core.hpp"

namespace fs = std::filesystem;

namespace {

int exit_code(diln::ErrorCategory c) {
    switch (c) {
        case diln::ErrorCategory::config: return 2;
        case diln::ErrorCategory::io: return 3;
        case diln::ErrorCategory::parse: return 4;
        case diln::ErrorCategory::validate: return 5;
        case diln::ErrorCategory::domain: return 6;
        case diln::ErrorCategory::mode: return 7;
    }
    return 1;
}

struct SampleArgs {
    std::string out_docs;
    std::string out_vocab;
    std::string out_truth;
    diln::SyntheticConfig cfg;
    std::string mode = "diln";
};

struct TrainArgs {
    std::string docs;
    std::string vocab;
    std::string out_dir;
    std::string mode = "diln";
    std::string trainer = "batch";
    diln::TrainConfig cfg;
    double gamma0 = -1.0;  // resolved by trainer when unset
    diln::StepSchedule schedule;
    diln::MinibatchPlan plan;
    int epochs = 1;
    int eval_every = 10;
    std::string test_docs;
    std::string test_vocab;
    int eval_samples = 200;
};

void add_fit_options(CLI::App* cmd, diln::FitOptions& fit) {
    cmd->add_option("--inner-iters", fit.max_iters, "Cap on per-document coordinate iterations");
    cmd->add_option("--inner-tol", fit.tol, "Convergence threshold on normalized E[Z] change");
    cmd->add_option("--u-steps", fit.location_steps, "Gradient steps per document-location update");
}

void write_manifest(const TrainArgs& args, const std::string& path) {
    std::FILE* f = std::fopen(path.c_str(), "w");
    if (!f) throw diln::io_error("cannot write manifest '" + path + "'");
    std::fprintf(f, "# diln run manifest (version 1); usable as --config for train\n");
    std::fprintf(f, "[train]\n");
    std::fprintf(f, "docs=\"%s\"\n", args.docs.c_str());
    std::fprintf(f, "vocab=\"%s\"\n", args.vocab.c_str());
    std::fprintf(f, "out-dir=\"%s\"\n", args.out_dir.c_str());
    std::fprintf(f, "mode=%s\n", args.mode.c_str());
    std::fprintf(f, "trainer=%s\n", args.trainer.c_str());
    std::fprintf(f, "truncation=%d\n", args.cfg.model.truncation);
    std::fprintf(f, "latent-dim=%d\n", args.cfg.model.kernel.latent_dim);
    std::fprintf(f, "location-var=%.17g\n", args.cfg.model.kernel.location_var);
    std::fprintf(f, "gamma0=%.17g\n", args.cfg.model.gamma0);
    std::fprintf(f, "tau1=%.17g\ntau2=%.17g\n", args.cfg.model.tau1, args.cfg.model.tau2);
    std::fprintf(f, "kappa1=%.17g\nkappa2=%.17g\n", args.cfg.model.kappa1, args.cfg.model.kappa2);
    std::fprintf(f, "rel-tol=%.17g\n", args.cfg.rel_tol);
    std::fprintf(f, "max-iters=%d\n", args.cfg.max_iters);
    std::fprintf(f, "inner-iters=%d\n", args.cfg.fit.max_iters);
    std::fprintf(f, "inner-tol=%.17g\n", args.cfg.fit.tol);
    std::fprintf(f, "u-steps=%d\n", args.cfg.fit.location_steps);
    std::fprintf(f, "location-steps=%d\n", args.cfg.location_steps);
    std::fprintf(f, "seed=%llu\n", static_cast<unsigned long long>(args.cfg.seed));
    std::fprintf(f, "batch-size=%d\n", args.plan.batch_size);
    std::fprintf(f, "zeta=%.17g\n", args.schedule.zeta);
    std::fprintf(f, "step-kappa=%.17g\n", args.schedule.kappa);
    std::fprintf(f, "epochs=%d\n", args.epochs);
    std::fprintf(f, "eval-every=%d\n", args.eval_every);
    std::fprintf(f, "eval-samples=%d\n", args.eval_samples);
    std::fclose(f);
}

void write_batch_trace(const diln::TrainTrace& trace, const std::string& path) {
    std::FILE* f = std::fopen(path.c_str(), "w");
    if (!f) throw diln::io_error("cannot write trace '" + path + "'");
    std::fprintf(f, "iter\tbound\talpha\tbeta\tseconds\n");
    for (std::size_t i = 0; i < trace.bound.size(); ++i) {
        std::fprintf(f, "%zu\t%.10g\t%.10g\t%.10g\t%.3f\n", i, trace.bound[i], trace.alpha[i],
                     trace.beta[i], trace.seconds[i]);
    }
    std::fclose(f);
}

void write_stochastic_trace(const diln::TrainTrace& trace, const std::string& path) {
    std::FILE* f = std::fopen(path.c_str(), "w");
    if (!f) throw diln::io_error("cannot write trace '" + path + "'");
    std::fprintf(f, "iter\tdocs_seen\trho\tbound\talpha\tbeta\tseconds\n");
    for (std::size_t i = 0; i < trace.bound.size(); ++i) {
        std::fprintf(f, "%zu\t%lld\t%.10g\t%.10g\t%.10g\t%.10g\t%.3f\n", i,
                     static_cast<long long>(trace.docs_seen[i]), trace.rho[i], trace.bound[i],
                     trace.alpha[i], trace.beta[i], trace.seconds[i]);
    }
    std::fclose(f);
}

int run_sample(const SampleArgs& args) {
    diln::SyntheticConfig cfg = args.cfg;
    cfg.mode = diln::mode_from_string(args.mode);
    auto synth = diln::generate_corpus(cfg);
    diln::save_corpus(synth.corpus, args.out_docs, args.out_vocab);
    if (!args.out_truth.empty()) diln::save_ground_truth(synth.truth, args.out_truth);
    std::printf("sampled %zu documents, %zu terms, %lld tokens\n", synth.corpus.num_documents(),
                synth.corpus.vocab_size(), static_cast<long long>(synth.corpus.total_tokens()));
    return 0;
}

int run_train(TrainArgs& args) {
    args.cfg.model.mode = diln::mode_from_string(args.mode);
    if (args.trainer != "batch" && args.trainer != "stochastic") {
        throw diln::config_error("trainer must be 'batch' or 'stochastic'");
    }
    if (args.gamma0 > 0.0) {
        args.cfg.model.gamma0 = args.gamma0;
    } else {
        args.cfg.model.gamma0 = (args.trainer == "batch") ? 0.5 : 0.01;
    }
    args.cfg.validate();

    const diln::Corpus corpus = diln::load_corpus(args.docs, args.vocab);
    fs::create_directories(args.out_dir);
    write_manifest(args, args.out_dir + "/manifest.txt");

    diln::Checkpoint ckpt;
    ckpt.config = args.cfg.model;
    if (args.trainer == "batch") {
        auto result = diln::train_batch(corpus, args.cfg);
        ckpt.state = std::move(result.state);
        ckpt.iteration = result.iterations;
        write_batch_trace(result.trace, args.out_dir + "/trace.tsv");
        std::printf("batch training: %d iterations, final bound %.6g\n", result.iterations,
                    result.trace.bound.back());
    } else {
        diln::StochasticOptions opts;
        opts.epochs = args.epochs;
        opts.eval_every = args.eval_every;
        std::FILE* eval_log = nullptr;
        diln::Corpus test;
        if (!args.test_docs.empty()) {
            test = diln::load_corpus(args.test_docs,
                                     args.test_vocab.empty() ? args.vocab : args.test_vocab);
            eval_log = std::fopen((args.out_dir + "/evals.tsv").c_str(), "w");
            if (!eval_log) throw diln::io_error("cannot write evals log");
            std::fprintf(eval_log, "iter\tdocs_seen\tperplexity\n");
            opts.hook = [&](std::int64_t t, std::int64_t seen, const diln::GlobalState& state) {
                auto view = diln::make_view(state);
                auto eval = diln::evaluate_corpus(test, view, args.cfg.fit, args.eval_samples,
                                                  args.cfg.seed + 1000003);
                std::fprintf(eval_log, "%lld\t%lld\t%.6g\n", static_cast<long long>(t),
                             static_cast<long long>(seen), eval.perplexity);
                std::fflush(eval_log);
            };
        }
        auto result = diln::train_stochastic(corpus, args.cfg, args.schedule, args.plan, opts);
        if (eval_log) std::fclose(eval_log);
        ckpt.state = std::move(result.state);
        ckpt.iteration = result.iterations;
        write_stochastic_trace(result.trace, args.out_dir + "/trace.tsv");
        std::printf("stochastic training: %lld batches, final bound estimate %.6g\n",
                    static_cast<long long>(result.iterations), result.trace.bound.back());
    }
    diln::save_checkpoint(ckpt, args.out_dir + "/checkpoint.diln");
    std::printf("checkpoint written to %s/checkpoint.diln\n", args.out_dir.c_str());
    return 0;
}

}  // namespace

int main(int argc, char** argv) {
    CLI::App app{"Discrete infinite logistic normal topic models"};
    app.require_subcommand(1);
    app.set_config("--config", "", "Key=value config file ([train] section); command-line flags win");

    // --- sample ---
    SampleArgs sample;
    auto* sample_cmd = app.add_subcommand("sample", "Generate a synthetic corpus with known topics");
    sample_cmd->add_option("--out-docs", sample.out_docs, "Output docs file")->required();
    sample_cmd->add_option("--out-vocab", sample.out_vocab, "Output vocab file")->required();
    sample_cmd->add_option("--truth", sample.out_truth, "Ground-truth sidecar file");
    sample_cmd->add_option("--num-docs", sample.cfg.num_documents)->check(CLI::PositiveNumber);
    sample_cmd->add_option("--vocab-size", sample.cfg.vocab_size)->check(CLI::PositiveNumber);
    sample_cmd->add_option("--topics", sample.cfg.num_topics, "Generating truncation")
        ->check(CLI::PositiveNumber);
    sample_cmd->add_option("--alpha", sample.cfg.alpha)->check(CLI::PositiveNumber);
    sample_cmd->add_option("--beta", sample.cfg.beta)->check(CLI::PositiveNumber);
    sample_cmd->add_option("--topic-gamma0", sample.cfg.topic_gamma0)->check(CLI::PositiveNumber);
    sample_cmd->add_option("--latent-dim", sample.cfg.kernel.latent_dim)->check(CLI::PositiveNumber);
    sample_cmd->add_option("--location-var", sample.cfg.kernel.location_var)->check(CLI::PositiveNumber);
    sample_cmd->add_option("--mean-length", sample.cfg.mean_doc_length)->check(CLI::PositiveNumber);
    sample_cmd->add_option("--mode", sample.mode)->check(CLI::IsMember({"diln", "hdp"}));
    sample_cmd->add_option("--seed", sample.cfg.seed);

    // --- train ---
    TrainArgs train;
    auto* train_cmd = app.add_subcommand("train", "Fit a DILN or HDP topic model");
    train_cmd->fallthrough(true);  // lets "train --config file" reach the app-level option
    train_cmd->add_option("--docs", train.docs)->required()->check(CLI::ExistingFile);
    train_cmd->add_option("--vocab", train.vocab)->required()->check(CLI::ExistingFile);
    train_cmd->add_option("--out-dir", train.out_dir)->required();
    train_cmd->add_option("--mode", train.mode)->check(CLI::IsMember({"diln", "hdp"}));
    train_cmd->add_option("--trainer", train.trainer)->check(CLI::IsMember({"batch", "stochastic"}));
    train_cmd->add_option("-T,--truncation", train.cfg.model.truncation)->check(CLI::PositiveNumber);
    train_cmd->add_option("--latent-dim", train.cfg.model.kernel.latent_dim)
        ->check(CLI::PositiveNumber);
    train_cmd->add_option("--location-var", train.cfg.model.kernel.location_var)
        ->check(CLI::PositiveNumber);
    train_cmd->add_option("--gamma0", train.gamma0,
                          "Topic Dirichlet prior (default 0.5 batch, 0.01 stochastic)");
    train_cmd->add_option("--tau1", train.cfg.model.tau1)->check(CLI::PositiveNumber);
    train_cmd->add_option("--tau2", train.cfg.model.tau2)->check(CLI::PositiveNumber);
    train_cmd->add_option("--kappa1", train.cfg.model.kappa1)->check(CLI::PositiveNumber);
    train_cmd->add_option("--kappa2", train.cfg.model.kappa2)->check(CLI::PositiveNumber);
    train_cmd->add_option("--rel-tol", train.cfg.rel_tol);
    train_cmd->add_option("--max-iters", train.cfg.max_iters)->check(CLI::PositiveNumber);
    add_fit_options(train_cmd, train.cfg.fit);
    train_cmd->add_option("--location-steps", train.cfg.location_steps,
                          "Gradient steps per topic-location update");
    train_cmd->add_option("--seed", train.cfg.seed);
    train_cmd->add_option("--batch-size", train.plan.batch_size)->check(CLI::PositiveNumber);
    train_cmd->add_option("--zeta", train.schedule.zeta)->check(CLI::PositiveNumber);
    train_cmd->add_option("--step-kappa", train.schedule.kappa,
                          "Step decay exponent, in (0.5, 1]");
    train_cmd->add_option("--epochs", train.epochs)->check(CLI::PositiveNumber);
    train_cmd->add_option("--eval-every", train.eval_every)->check(CLI::PositiveNumber);
    train_cmd->add_option("--test-docs", train.test_docs, "Held-out docs for periodic evaluation")
        ->check(CLI::ExistingFile);
    train_cmd->add_option("--test-vocab", train.test_vocab)->check(CLI::ExistingFile);
    train_cmd->add_option("--eval-samples", train.eval_samples)->check(CLI::PositiveNumber);

    // --- eval ---
    struct {
        std::string checkpoint, docs, vocab, report;
        int n_samples = 1000;
        std::uint64_t seed = 1;
        diln::FitOptions fit;
    } eval;
    auto* eval_cmd = app.add_subcommand("eval", "Held-out perplexity by document completion");
    eval_cmd->add_option("--checkpoint", eval.checkpoint)->required()->check(CLI::ExistingFile);
    eval_cmd->add_option("--docs", eval.docs)->required()->check(CLI::ExistingFile);
    eval_cmd->add_option("--vocab", eval.vocab)->required()->check(CLI::ExistingFile);
    eval_cmd->add_option("--report", eval.report, "Per-document report file");
    eval_cmd->add_option("--n-samples", eval.n_samples)->check(CLI::PositiveNumber);
    eval_cmd->add_option("--seed", eval.seed);
    add_fit_options(eval_cmd, eval.fit);

    // --- export-topics ---
    struct {
        std::string checkpoint, vocab, out;
        int n_words = 10;
    } topics;
    auto* topics_cmd = app.add_subcommand("export-topics", "Top words per topic, ranked by usage");
    topics_cmd->add_option("--checkpoint", topics.checkpoint)->required()->check(CLI::ExistingFile);
    topics_cmd->add_option("--vocab", topics.vocab)->required()->check(CLI::ExistingFile);
    topics_cmd->add_option("--out", topics.out)->required();
    topics_cmd->add_option("--n-words", topics.n_words)->check(CLI::PositiveNumber);

    // --- export-correlations ---
    struct {
        std::string checkpoint, out;
    } corr;
    auto* corr_cmd = app.add_subcommand("export-correlations", "Topic location cosine matrix");
    corr_cmd->add_option("--checkpoint", corr.checkpoint)->required()->check(CLI::ExistingFile);
    corr_cmd->add_option("--out", corr.out)->required();

    // --- export-doc-similarity ---
    struct {
        std::string checkpoint, docs, vocab, out;
        std::size_t query = 0;
        std::size_t top_n = 10;
        diln::FitOptions fit;
    } sim;
    auto* sim_cmd = app.add_subcommand("export-doc-similarity",
                                       "Documents ranked by location cosine to a query document");
    sim_cmd->add_option("--checkpoint", sim.checkpoint)->required()->check(CLI::ExistingFile);
    sim_cmd->add_option("--docs", sim.docs)->required()->check(CLI::ExistingFile);
    sim_cmd->add_option("--vocab", sim.vocab)->required()->check(CLI::ExistingFile);
    sim_cmd->add_option("--out", sim.out)->required();
    sim_cmd->add_option("--query", sim.query, "Query document index")->required();
    sim_cmd->add_option("--top-n", sim.top_n);
    add_fit_options(sim_cmd, sim.fit);

    try {
        app.parse(argc, argv);

        if (sample_cmd->parsed()) return run_sample(sample);
        if (train_cmd->parsed()) return run_train(train);
        if (eval_cmd->parsed()) {
            const auto ckpt = diln::load_checkpoint(eval.checkpoint);
            const auto corpus = diln::load_corpus(eval.docs, eval.vocab);
            if (corpus.vocab_size() != static_cast<std::size_t>(ckpt.state.vocab_size())) {
                throw diln::validate_error("eval: corpus vocabulary does not match checkpoint");
            }
            const auto view = diln::make_view(ckpt.state);
            const auto result =
                diln::evaluate_corpus(corpus, view, eval.fit, eval.n_samples, eval.seed);
            if (!eval.report.empty()) diln::write_eval_report(result, eval.report);
            std::printf("perplexity %.10g over %zu documents (%lld skipped)\n", result.perplexity,
                        result.estimates.size(), static_cast<long long>(result.skipped));
            return 0;
        }
        if (topics_cmd->parsed()) {
            const auto ckpt = diln::load_checkpoint(topics.checkpoint);
            const auto vocab = diln::load_vocabulary(topics.vocab);
            if (vocab.size() != static_cast<std::size_t>(ckpt.state.vocab_size())) {
                throw diln::validate_error("export-topics: vocabulary does not match checkpoint");
            }
            diln::export_topics(ckpt.state, ckpt.config.gamma0, vocab, topics.n_words, topics.out);
            return 0;
        }
        if (corr_cmd->parsed()) {
            const auto ckpt = diln::load_checkpoint(corr.checkpoint);
            diln::export_correlations(ckpt.state, corr.out);
            return 0;
        }
        if (sim_cmd->parsed()) {
            const auto ckpt = diln::load_checkpoint(sim.checkpoint);
            if (ckpt.state.mode == diln::Mode::HDP) {
                throw diln::mode_error("export-doc-similarity: HDP runs carry no document locations");
            }
            const auto corpus = diln::load_corpus(sim.docs, sim.vocab);
            if (corpus.vocab_size() != static_cast<std::size_t>(ckpt.state.vocab_size())) {
                throw diln::validate_error("export-doc-similarity: vocabulary does not match checkpoint");
            }
            const auto view = diln::make_view(ckpt.state);
            std::vector<diln::DocumentState> states;
            states.reserve(corpus.num_documents());
            for (const auto& doc : corpus.documents) {
                states.push_back(diln::fit_document(doc, view, sim.fit));
            }
            diln::export_doc_similarity(states, sim.query, sim.top_n, ckpt.state.mode, sim.out);
            return 0;
        }
    } catch (const CLI::ParseError& e) {
        if (e.get_exit_code() == 0) return app.exit(e);  // --help
        std::fprintf(stderr, "error: config: %s\n", e.what());
        return 2;
    } catch (const diln::Error& e) {
        std::fprintf(stderr, "error: %s: %s\n", to_string(e.category()), e.what());
        return exit_code(e.category());
    } catch (const std::exception& e) {
        std::fprintf(stderr, "error: internal: %s\n", e.what());
        return 1;
    }
    return 0;
}
