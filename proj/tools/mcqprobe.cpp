// mcqprobe: probe a model on multiple-choice questions and compare its uncertainty
// with student response distributions.
//
//   mcqprobe synth   --n 451 --seed 7 --out data/synthetic.jsonl
//   mcqprobe probe   --dataset data/synthetic.jsonl --backend mock --cache probes.jsonl
//   mcqprobe analyze --dataset data/synthetic.jsonl --backend mock --cache probes.jsonl --out out
//
// Every option can also be given in a TOML/INI file passed with --config; flags on
// the command line win over file values.

#include <iostream>

#include <CLI11.hpp>

#include "mcqprobe/cli.hpp"

int main(int argc, char** argv) {
    using namespace mcqprobe;

    CLI::App app{"LLM choice uncertainty vs. student response distributions"};
    app.set_config("--config", "", "TOML/INI file with option values");
    app.require_subcommand(1);

    RunConfig cfg;
    int n = 451;
    TypeMix mix = kReferenceTypeMix;

    app.add_option("--dataset", cfg.dataset, "Dataset file (.jsonl or .csv)");
    app.add_option("--backend", cfg.backend, "Backend kind")->check(CLI::IsMember({"http", "mock"}));
    app.add_option("--endpoint", cfg.endpoint, "Completion endpoint URL (http backend)");
    app.add_option("--model", cfg.model, "Model name sent to the endpoint");
    app.add_option("--phrasing", cfg.phrasings, "Instruction phrasings to use (1, 2)")
        ->delimiter(',');
    app.add_option("--label-style", cfg.label_style, "Choice label glyph: \"A)\", \"A.\" or \"(A)\"");
    app.add_option("--variants", cfg.variants,
                   "Comma-separated letter token templates ({L} upper, {l} lower)");
    app.add_option("--concurrency", cfg.concurrency, "Simultaneous probe requests");
    app.add_option("--top-k", cfg.top_k, "First-token candidates requested per prompt");
    app.add_option("--cache", cfg.cache, "Probe cache file (append-only JSONL)");
    app.add_option("--error-log", cfg.error_log, "Probe error log (default <cache>.errors.jsonl)");
    auto* out_opt = app.add_option("--out", cfg.out, "Output directory (synth: output file)");
    app.add_option("--alpha", cfg.alpha, "Significance level");
    app.add_option("--conform-epsilon", cfg.conform_epsilon,
                   "Minimum averaged letter mass for a conforming probe");
    app.add_option("--seed", cfg.seed, "Seed for the mock backend and the synthesizer");
    app.add_flag("--allow-partial", cfg.allow_partial, "Analyze even if the cache has gaps");
    app.add_option("--mock-spec", cfg.mock_spec, "Mock model spec (JSON); default: latents = student rates");
    app.add_option("--mock-bias", cfg.mock_bias, "Mock positional bias for labels A,B,C")
        ->delimiter(',');
    app.add_option("--mock-noise", cfg.mock_noise, "Mock logit noise scale");
    app.add_option("--retries", cfg.retries, "Retries for transient HTTP failures");
    app.add_option("--retry-base-ms", cfg.retry_base_ms, "First retry delay; doubles each retry");
    app.add_option("--timeout", cfg.timeout_s, "HTTP timeout in seconds");
    app.add_option("--n", n, "Number of synthetic questions");
    app.add_option("--mix", mix, "Question type mix for types 1..4")->delimiter(',');

    auto* probe = app.add_subcommand("probe", "Query the backend and fill the probe cache");
    auto* analyze = app.add_subcommand("analyze", "Compute profiles and reports from the cache");
    auto* synth = app.add_subcommand("synth", "Write a synthetic dataset");
    for (auto* sub : {probe, analyze, synth}) sub->fallthrough();

    try {
        app.parse(argc, argv);
    } catch (const CLI::ParseError& e) {
        return app.exit(e) == 0 ? kExitOk : kExitError;
    }

    if (probe->parsed()) return cmd_probe(cfg, std::cout, std::cerr);
    if (analyze->parsed()) return cmd_analyze(cfg, std::cout, std::cerr);
    if (synth->parsed()) {
        if (out_opt->count() == 0) {
            std::cerr << "error: synth requires --out <file>\n";
            return kExitError;
        }
        return cmd_synth(n, mix, cfg.seed, cfg.out, std::cout, std::cerr);
    }
    return kExitError;
}
