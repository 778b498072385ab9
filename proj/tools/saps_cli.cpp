// Command-line front end for the stitching pipeline.
//
// Exit codes: 0 success, 1 usage error, 2 validation or numerical error.

#include "saps/saps.hpp"

#include <CLI11.hpp>

#include <cstdio>
#include <iostream>
#include <optional>
#include <string>

namespace {

using namespace saps;

bool quiet = false;

void note(const std::string& msg) {
    if (!quiet) {
        std::cerr << msg << "\n";
    }
}

GridDriveConfig read_env(const std::string& path) { return env_config_from_json(json_util::parse_file(path), path); }

int cmd_train(const std::string& env_path, const std::string& train_path, const std::string& out, const std::string& log_path) {
    const GridDriveConfig env = read_env(env_path);
    const TrainConfig cfg = train_config_from_json(json_util::parse_file(train_path), train_path);
    const PolicyNet tmpl = default_policy_net(kObsDim, static_cast<std::size_t>(action_count(env.task)));
    std::vector<TrainLogRow> log;
    const PolicyBundle bundle = train(env, tmpl, cfg, log_path.empty() ? nullptr : &log);
    save_bundle(bundle, out);
    if (!log_path.empty()) {
        write_train_log(log_path, log, cfg.method);
    }
    char buf[160];
    std::snprintf(buf, sizeof buf, "trained %s, mean return %.6g", bundle.id().c_str(), bundle.meta.mean_return);
    note(buf);
    return 0;
}

int cmd_collect(const std::string& policy, const std::string& env_u, const std::string& env_v, std::size_t n, const std::string& mode,
                std::int64_t seed, const std::string& out_u, const std::string& out_v) {
    const PolicyBundle bundle = load_bundle(policy);
    const GridDriveConfig cu = read_env(env_u);
    const GridDriveConfig cv = read_env(env_v);
    ObservationPairs obs;
    if (parse_anchor_mode(mode) == AnchorMode::state) {
        obs = collect_state_anchors(bundle, cu, cv, n, seed);
    } else {
        check_anchor_configs(cu, cv);
        obs = collect_pixel_anchors(collect_state_anchors(bundle, cu, cu, n, seed).u, cu.visual, cv.visual);
    }
    write_matrix(out_u, obs.u);
    write_matrix(out_v, obs.v);
    note("collected " + std::to_string(n) + " anchor pairs (" + mode + ")");
    return 0;
}

int cmd_embed(const std::string& policy, const std::string& obs_path, const std::string& out) {
    const PolicyBundle bundle = load_bundle(policy);
    const Matrix z = embed(bundle.net, read_matrix(obs_path));
    write_matrix(out, z);
    note("embedded " + std::to_string(z.rows()) + " observations into " + std::to_string(z.cols()) + " dimensions");
    return 0;
}

int cmd_estimate(const std::string& src, const std::string& dst, const std::string& method, bool scale, double floor, double cutoff,
                 const std::string& out) {
    AnchorPairSet anchors{read_matrix(src), read_matrix(dst), {}};
    anchors.meta.mode = "file";
    EstimateOptions opts{parse_map_kind(method), scale, floor, cutoff};
    LatentMap map = estimate(anchors, opts);
    map.meta.source_id = src;
    map.meta.target_id = dst;
    save_map(map, out);
    char buf[160];
    std::snprintf(buf, sizeof buf, "%s map from %zu anchors, residual %.6g", method.c_str(), anchors.size(), map.meta.residual);
    note(buf);
    if (!map.meta.warning.empty()) {
        note("warning: " + map.meta.warning);
    }
    return 0;
}

int cmd_stitch(const std::string& encoder, const std::string& controller, const std::string& map_path, const std::string& out) {
    const PolicyBundle enc = load_bundle(encoder);
    const PolicyBundle ctrl = load_bundle(controller);
    std::optional<LatentMap> map;
    if (!map_path.empty()) {
        map = load_map(map_path);
    }
    const StitchedPolicy p = stitch(enc, ctrl, map);
    save_bundle(to_bundle(p, enc.meta, ctrl.meta), out);
    note("stitched " + enc.id() + " encoder with " + ctrl.id() + " controller" + (map ? "" : " (naive)"));
    return 0;
}

int cmd_eval(const std::string& policy, const std::string& env_path, std::size_t episodes, std::int64_t seed, const std::string& out) {
    const PolicyBundle bundle = load_bundle(policy);
    const GridDriveConfig env = read_env(env_path);
    const EvalStats s = evaluate(bundle, env, episodes, seed);
    Json report{{"policy", bundle.id()}, {"env", to_json(env)},       {"episodes", episodes},
                {"eval_seed", seed},     {"mean_return", s.mean},     {"std_return", s.std},
                {"returns", s.returns}};
    json_util::write_file(out, report);
    char buf[160];
    std::snprintf(buf, sizeof buf, "%s: mean %.6g std %.6g over %zu episodes", bundle.id().c_str(), s.mean, s.std, episodes);
    note(buf);
    return 0;
}

int cmd_table(const std::string& library, const std::string& config, const std::string& out) {
    const TableConfig cfg = table_config_from_json(json_util::parse_file(config), config);
    const auto bundles = load_library(library);
    note("running stitching table over " + std::to_string(bundles.size()) + " bundles");
    const StitchReport report = run_stitching_table(bundles, cfg);
    write_text(out, report.to_csv());
    note("wrote " + std::to_string(report.cells.size()) + " cells to " + out);
    return 0;
}

int cmd_analyze(const std::string& au, const std::string& av, const std::string& map_path, std::size_t bins, std::size_t k, const std::string& prefix) {
    AnchorPairSet anchors{read_matrix(au), read_matrix(av), {}};
    const LatentMap map = load_map(map_path);
    const CosineSummary cos = analyze_cosine(anchors, map, bins, prefix + "_cosine.csv");
    const PcaSummary pca = analyze_pca(anchors.source, anchors.target, map, k, prefix);
    const Json summary{{"mean_aligned", cos.mean_aligned},
                       {"mean_naive", cos.mean_naive},
                       {"centroid_distance_aligned", pca.centroid_distance_aligned},
                       {"centroid_distance_raw", pca.centroid_distance_raw}};
    std::cout << summary.dump(2) << "\n";
    return 0;
}

} // namespace

int main(int argc, char** argv) {
    CLI::App app{"Latent alignment and zero-shot policy stitching on GridDrive"};
    app.require_subcommand(1);
    app.add_flag("-q,--quiet", quiet, "Suppress progress messages on stderr");

    std::string env, train_cfg, out, log_path;
    auto* train = app.add_subcommand("train", "Train an end-to-end policy bundle");
    train->add_option("--env", env, "Environment config (JSON)")->required();
    train->add_option("--train", train_cfg, "Training config (JSON)")->required();
    train->add_option("--out", out, "Output bundle")->required();
    train->add_option("--log", log_path, "Optional training log (CSV)");

    std::string policy, env_u, env_v, mode = "state", out_u, out_v;
    std::size_t n = kDefaultAnchorCount;
    std::int64_t seed = 0;
    auto* collect = app.add_subcommand("collect-anchors", "Collect raw anchor observation pairs");
    collect->add_option("--policy", policy, "Rollout bundle")->required();
    collect->add_option("--env-u", env_u, "Source environment config")->required();
    collect->add_option("--env-v", env_v, "Target environment config")->required();
    collect->add_option("--n", n, "Number of pairs")->capture_default_str();
    collect->add_option("--mode", mode, "state or pixel")->check(CLI::IsMember({"state", "pixel"}))->capture_default_str();
    collect->add_option("--seed", seed, "First rollout track seed")->required();
    collect->add_option("--out-u", out_u, "Source observations (matrix file)")->required();
    collect->add_option("--out-v", out_v, "Target observations (matrix file)")->required();

    std::string obs;
    auto* embed_cmd = app.add_subcommand("embed", "Encode observations with a bundle's encoder");
    embed_cmd->add_option("--policy", policy, "Bundle")->required();
    embed_cmd->add_option("--obs", obs, "Observations (matrix file)")->required();
    embed_cmd->add_option("--out", out, "Embeddings (matrix file)")->required();

    std::string src, dst, method;
    bool scale = false;
    double floor = kDefaultScalerFloor;
    double cutoff = kDefaultCutoff;
    auto* est = app.add_subcommand("estimate", "Estimate a latent map from anchor embeddings");
    est->add_option("--src", src, "Source embeddings X_u")->required();
    est->add_option("--dst", dst, "Target embeddings X_v")->required();
    est->add_option("--method", method, "orthogonal, affine or linear")->check(CLI::IsMember({"orthogonal", "affine", "linear"}))->required();
    est->add_option("--scale", scale, "Standard scaling (true/false)")->capture_default_str();
    est->add_option("--floor", floor, "Scaler std floor")->capture_default_str();
    est->add_option("--cutoff", cutoff, "Relative pseudoinverse cutoff")->capture_default_str();
    est->add_option("--out", out, "Output map (JSON)")->required();

    std::string encoder, controller, map_path;
    auto* stitch_cmd = app.add_subcommand("stitch", "Compose an encoder and a controller into one bundle");
    stitch_cmd->add_option("--encoder", encoder, "Encoder bundle")->required();
    stitch_cmd->add_option("--controller", controller, "Controller bundle")->required();
    stitch_cmd->add_option("--map", map_path, "Latent map; omitted = naive stitching");
    stitch_cmd->add_option("--out", out, "Output bundle")->required();

    std::size_t episodes = 10;
    auto* eval = app.add_subcommand("eval", "Evaluate a bundle greedily");
    eval->add_option("--policy", policy, "Bundle")->required();
    eval->add_option("--env", env, "Environment config (JSON)")->required();
    eval->add_option("--episodes", episodes, "Episodes")->capture_default_str();
    eval->add_option("--seed", seed, "Evaluation track seed")->required();
    eval->add_option("--out", out, "Report (JSON)")->required();

    std::string library, config;
    auto* table = app.add_subcommand("table", "Run the stitching table over a bundle library");
    table->add_option("--library", library, "Directory of bundles")->required();
    table->add_option("--config", config, "Table config (JSON)")->required();
    table->add_option("--out", out, "Report (CSV)")->required();

    std::string au, av, prefix;
    std::size_t bins = 20;
    std::size_t k = 3;
    auto* analyze = app.add_subcommand("analyze", "Cosine histogram and PCA views of aligned anchors");
    analyze->add_option("--anchors-u", au, "Source embeddings")->required();
    analyze->add_option("--anchors-v", av, "Target embeddings")->required();
    analyze->add_option("--map", map_path, "Latent map")->required();
    analyze->add_option("--bins", bins, "Histogram bins")->capture_default_str();
    analyze->add_option("--k", k, "PCA components")->capture_default_str();
    analyze->add_option("--out-prefix", prefix, "Output path prefix")->required();

    try {
        app.parse(argc, argv);
    } catch (const CLI::CallForHelp& e) {
        return app.exit(e);
    } catch (const CLI::CallForAllHelp& e) {
        return app.exit(e);
    } catch (const CLI::ParseError& e) {
        app.exit(e, std::cerr, std::cerr);
        return 1;
    }

    try {
        if (*train) return cmd_train(env, train_cfg, out, log_path);
        if (*collect) return cmd_collect(policy, env_u, env_v, n, mode, seed, out_u, out_v);
        if (*embed_cmd) return cmd_embed(policy, obs, out);
        if (*est) return cmd_estimate(src, dst, method, scale, floor, cutoff, out);
        if (*stitch_cmd) return cmd_stitch(encoder, controller, map_path, out);
        if (*eval) return cmd_eval(policy, env, episodes, seed, out);
        if (*table) return cmd_table(library, config, out);
        if (*analyze) return cmd_analyze(au, av, map_path, bins, k, prefix);
    } catch (const std::exception& e) {
        std::cerr << "error: " << e.what() << "\n";
        return 2;
    }
    return 1;
}
