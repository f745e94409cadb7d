#include <cstdio>
#include <iostream>
#include <optional>

#include "CLI11.hpp"

#include "nlmodal/config.hpp"
#include "nlmodal/error.hpp"
#include "nlmodal/experiments.hpp"

using namespace nlmodal;

namespace {

const char* describe(Experiment e) {
    switch (e) {
        case Experiment::Convergence: return "sensor-count convergence of the damping estimators on linear beams";
        case Experiment::BackboneEpmc: return "EPMC backbone by harmonic balance and continuation";
        case Experiment::BackboneVirtual: return "PLL backbone test on the virtual rig, identification and EPMC comparison";
        case Experiment::Identify: return "identification from a stored test record";
        case Experiment::FreqResp: return "constant-level frequency-response tests on the virtual rig";
        case Experiment::RomPredict: return "single-mode ROM frequency responses from an identified backbone";
    }
    return "";
}

}  // namespace

int main(int argc, char** argv) {
    CLI::App app{"Virtual nonlinear modal testing laboratory"};
    app.require_subcommand(1);

    auto* run = app.add_subcommand("run", "run an experiment config");
    std::string config_path, out_dir = "out";
    std::optional<std::uint64_t> seed;
    int threads = 1;
    run->add_option("--config", config_path, "experiment config (YAML)")->required()->check(CLI::ExistingFile);
    run->add_option("--out", out_dir, "output directory");
    run->add_option("--seed", seed, "override the config seed");
    run->add_option("--threads", threads, "worker threads")->check(CLI::PositiveNumber);

    auto* cmp = app.add_subcommand("compare", "compare a candidate CSV against a reference CSV");
    std::string ref_path, cand_path, key, tol_text;
    double default_tol = 0.0;
    cmp->add_option("reference", ref_path, "reference CSV")->required()->check(CLI::ExistingFile);
    cmp->add_option("candidate", cand_path, "candidate CSV")->required()->check(CLI::ExistingFile);
    cmp->add_option("--key", key, "align rows by interpolating the reference in this column");
    cmp->add_option("--tol", tol_text, "relative tolerances, e.g. D=0.05,omega=0.005");
    cmp->add_option("--default-tol", default_tol, "tolerance for columns without an explicit entry");

    app.add_subcommand("list-experiments", "list the available experiment types");

    CLI11_PARSE(app, argc, argv);

    try {
        if (app.got_subcommand("list-experiments")) {
            for (const auto& [e, name] : experiment_catalog()) std::printf("%-18s %s\n", name.c_str(), describe(e));
            return 0;
        }
        if (app.got_subcommand("run")) {
            ExperimentConfig config = load_config(config_path);
            if (seed) config.seed = *seed;
            const RunManifest m = run_experiment(config, out_dir, threads);
            std::printf("%s: %s (config %s), %zu artifacts in %s\n", m.experiment.c_str(), m.status.c_str(),
                        m.config_hash.c_str(), m.artifacts.size(), out_dir.c_str());
            if (!m.ok()) {
                std::fprintf(stderr, "error [%s]: %s\n", m.error_code.c_str(), m.error_message.c_str());
                return 1;
            }
            return 0;
        }
        CompareSpec spec;
        spec.key = key;
        spec.tolerances = parse_tolerances(tol_text);
        spec.default_tolerance = default_tol;
        const CompareReport r = compare_tables(read_csv(ref_path), read_csv(cand_path), spec);
        std::cout << r.to_text();
        return r.pass ? 0 : 1;
    } catch (const Error& e) {
        std::fprintf(stderr, "error [%s]: %s\n", to_string(e.code()), e.what());
        return 2;
    }
}
