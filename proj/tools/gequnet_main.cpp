// gequnet: train, evaluate, and verify group-equivariant pathloss models.
//
// Exit codes: 0 success, 1 verification/metric failure (including training
// divergence), 2 usage or configuration errors.

#include <CLI11.hpp>
#include <json.hpp>

#include <filesystem>
#include <fstream>
#include <iomanip>
#include <iostream>

#include "gequnet/data.hpp"
#include "gequnet/image_io.hpp"
#include "gequnet/model.hpp"
#include "gequnet/train.hpp"
#include "gequnet/verify.hpp"

namespace fs = std::filesystem;
using namespace gequnet;

namespace {

constexpr int kExitSuccess = 0;
constexpr int kExitFailure = 1;
constexpr int kExitUsage = 2;

struct UsageError : std::runtime_error {
    using std::runtime_error::runtime_error;
};

std::array<int, 3> parse_counts(const std::string& s) {
    std::array<int, 3> counts{};
    std::stringstream ss(s);
    std::string item;
    int i = 0;
    while (std::getline(ss, item, ',') && i < 3) counts[static_cast<std::size_t>(i++)] = std::stoi(item);
    if (i != 3) throw UsageError("expected three comma-separated split counts, got '" + s + "'");
    return counts;
}

std::pair<int, int> parse_xy(const std::string& s) {
    const auto comma = s.find(',');
    if (comma == std::string::npos) throw UsageError("expected X,Y but got '" + s + "'");
    return {std::stoi(s.substr(0, comma)), std::stoi(s.substr(comma + 1))};
}

std::vector<Sample> select_split(const DatasetManifest& manifest, const std::string& split,
                                 const std::array<int, 3>& counts) {
    if (split == "all") return load_dataset(manifest);
    const auto splits = split_by_map(manifest, counts);
    if (split == "train") return load_dataset(splits[0]);
    if (split == "val") return load_dataset(splits[1]);
    if (split == "test") return load_dataset(splits[2]);
    throw UsageError("unknown split '" + split + "' (use train, val, test, or all)");
}

int cmd_synth(int maps, int size, int tx_per_map, std::uint64_t seed, const std::string& out_dir,
              double pl0, double gamma, double wall_db) {
    ToyParams params;
    params.n_maps = maps;
    params.size = size;
    params.txs_per_map = tx_per_map;
    params.seed = seed;
    params.pl0_db = pl0;
    params.gamma = gamma;
    params.wall_db = wall_db;
    const std::vector<Sample> samples = synth_toy_dataset(params);
    Normalizer norm;
    norm.dynamic_range_db = params.range_db;
    write_dataset(out_dir, samples, "DPM_noCars", norm);
    std::cout << "wrote " << samples.size() << " samples over " << maps << " maps to " << out_dir
              << "\n";
    return kExitSuccess;
}

void write_run_metadata(const std::string& path, const ModelConfig& mc, const TrainConfig& tc,
                        const std::string& manifest_path, const std::array<int, 3>& counts,
                        const TrainResult& result) {
    std::ofstream out(path, std::ios::trunc);
    out << std::setprecision(17);
    out << "group=" << mc.spec.name() << "\n";
    out << "with_cars=" << (mc.with_cars ? 1 : 0) << "\n";
    out << "width_scale=" << mc.width_scale.str() << "\n";
    out << "seed=" << tc.seed << "\n";
    out << "learning_rate=" << tc.learning_rate << "\n";
    out << "batch_size=" << tc.batch_size << "\n";
    out << "max_epochs=" << tc.max_epochs << "\n";
    out << "lr_decay_factor=" << tc.lr_decay_factor << "\n";
    out << "lr_patience=" << tc.lr_patience << "\n";
    out << "mask_buildings=" << (tc.loss_mask_buildings ? 1 : 0) << "\n";
    out << "manifest=" << manifest_path << "\n";
    out << "split_counts=" << counts[0] << "," << counts[1] << "," << counts[2] << "\n";
    out << "best_epoch=" << result.best_epoch << "\n";
    out << "best_val_rmse_norm=" << result.best_val_rmse << "\n";
    if (!out) throw std::runtime_error("cannot write run metadata to '" + path + "'");
}

int cmd_train(const std::string& manifest_path, const std::string& group,
              const std::string& out_dir, const std::string& counts_str,
              const std::string& width_scale, bool with_cars, const TrainConfig& tc) {
    const DatasetManifest manifest = DatasetManifest::load(manifest_path);
    const std::array<int, 3> counts = parse_counts(counts_str);
    const auto splits = split_by_map(manifest, counts);
    const std::vector<Sample> train_set = load_dataset(splits[0]);
    const std::vector<Sample> val_set = load_dataset(splits[1]);

    ModelConfig mc;
    mc.spec = GroupSpec::parse(group);
    mc.with_cars = with_cars;
    mc.width_scale = WidthScale::parse(width_scale);
    mc.seed = tc.seed;

    fs::create_directories(out_dir);
    Model model(mc);
    model.init_weights(tc.seed);

    TrainResult result{model, 0, 0.0, {}};
    try {
        result = train(model, train_set, val_set, tc, manifest.normalizer, &std::cout);
    } catch (const DivergenceError& e) {
        std::cerr << "error: " << e.what() << "\n";
        return kExitFailure;
    }

    save_checkpoint((fs::path(out_dir) / "best.ckpt").string(), result.best_model);
    save_checkpoint((fs::path(out_dir) / "final.ckpt").string(), model);
    write_curves_csv((fs::path(out_dir) / "curves.csv").string(), result.curves);
    write_run_metadata((fs::path(out_dir) / "run_meta.txt").string(), mc, tc, manifest_path,
                       counts, result);
    std::cout << "best epoch " << result.best_epoch << " with validation RMSE "
              << result.best_val_rmse << " (" << rmse_db(result.best_val_rmse,
                                                         manifest.normalizer.dynamic_range_db)
              << " dB); artifacts in " << out_dir << "\n";
    return kExitSuccess;
}

int cmd_eval(const std::string& checkpoint, const std::string& manifest_path,
             const std::string& split, const std::string& counts_str, bool mask_buildings,
             const std::string& csv_out) {
    const Model model = load_checkpoint(checkpoint);
    const DatasetManifest manifest = DatasetManifest::load(manifest_path);
    const std::vector<Sample> samples =
        select_split(manifest, split, parse_counts(counts_str));

    std::vector<PerSampleMetrics> per_sample;
    const MetricReport report =
        evaluate(model, samples, manifest.normalizer, mask_buildings, &per_sample);

    std::cout << std::setprecision(17);
    std::cout << "samples " << samples.size() << "\n";
    std::cout << "rmse_norm " << report.rmse_norm << "\n";
    std::cout << "rmse_db " << report.rmse_db << "\n";
    std::cout << "nmse " << report.nmse << "\n";

    if (!csv_out.empty()) {
        std::ofstream out(csv_out, std::ios::trunc);
        if (!out) throw std::runtime_error("cannot write per-sample CSV to '" + csv_out + "'");
        out << std::setprecision(17);
        out << "index,map_id,n_pixels,sse,rmse_norm,rmse_db\n";
        for (const auto& ps : per_sample)
            out << ps.index << "," << ps.map_id << "," << ps.n_pixels << "," << ps.sse << ","
                << ps.rmse_norm << ","
                << rmse_db(ps.rmse_norm, manifest.normalizer.dynamic_range_db) << "\n";
    }
    return kExitSuccess;
}

int cmd_predict(const std::string& checkpoint, const std::string& layout_png,
                const std::string& tx_str, const std::string& out_png,
                const std::string& cars_png, bool mask_buildings) {
    const Model model = load_checkpoint(checkpoint);
    Sample sample;
    sample.map_id = "layout";
    sample.building = read_png_gray(layout_png);
    for (std::int64_t i = 0; i < sample.building.size(); ++i)
        sample.building[i] = sample.building[i] >= 0.5f ? 1.0f : 0.0f;
    const auto [tx_x, tx_y] = parse_xy(tx_str);  // X = column, Y = row
    sample.tx_col = tx_x;
    sample.tx_row = tx_y;
    const int H = sample.building.dim(0), W = sample.building.dim(1);
    if (tx_x < 0 || tx_x >= W || tx_y < 0 || tx_y >= H)
        throw UsageError("transmitter (" + tx_str + ") lies outside the " + std::to_string(W) +
                         "x" + std::to_string(H) + " layout");
    if (model.config().with_cars) {
        if (cars_png.empty())
            throw UsageError("checkpoint was trained with car inputs; pass --cars");
        sample.cars = read_png_gray(cars_png);
        for (std::int64_t i = 0; i < sample.cars->size(); ++i)
            (*sample.cars)[i] = (*sample.cars)[i] >= 0.5f ? 1.0f : 0.0f;
    }
    sample.target = Tensor({H, W});

    Tensor x = encode_input<float>(sample, model.config().with_cars);
    Tensor pred = model.forward(std::move(x).reshaped({1, model.config().input_channels(), H, W}));
    Tensor image({H, W});
    for (std::int64_t i = 0; i < image.size(); ++i) {
        float v = pred[i];
        if (mask_buildings && sample.building[i] > 0.5f) v = 0.0f;
        image[i] = v;
    }
    write_png_gray(out_png, image);
    std::cout << "wrote " << out_png << "\n";
    return kExitSuccess;
}

int cmd_verify(const std::string& group, bool full, const std::string& report_path,
               bool inject_fiber_fault, int model_size) {
    VerifyOptions options;
    options.full = full;
    options.inject_fiber_fault = inject_fiber_fault;
    options.model_size = model_size;
    const std::vector<CheckResult> checks = run_verification(GroupSpec::parse(group), options);

    bool all_pass = true;
    for (const CheckResult& c : checks) {
        all_pass &= c.pass;
        std::cout << (c.pass ? "[PASS] " : "[FAIL] ") << c.name << "  max_err=" << std::scientific
                  << std::setprecision(3) << c.max_err << std::defaultfloat;
        if (!c.detail.empty()) std::cout << "  (" << c.detail << ")";
        std::cout << "\n";
    }
    std::cout << (all_pass ? "verification passed" : "verification FAILED") << " (" << checks.size()
              << " checks)\n";

    if (!report_path.empty()) {
        nlohmann::json j;
        j["group"] = group;
        j["full"] = full;
        j["pass"] = all_pass;
        j["checks"] = nlohmann::json::array();
        for (const CheckResult& c : checks)
            j["checks"].push_back({{"name", c.name},
                                   {"pass", c.pass},
                                   {"max_err", c.max_err},
                                   {"detail", c.detail}});
        std::ofstream out(report_path, std::ios::trunc);
        if (!out) throw std::runtime_error("cannot write report to '" + report_path + "'");
        out << j.dump(2) << "\n";
    }
    return all_pass ? kExitSuccess : kExitFailure;
}

}  // namespace

int main(int argc, char** argv) {
    CLI::App app{"group-equivariant UNet for radio pathloss estimation"};
    app.require_subcommand(1);
    app.set_config("--config", "", "key=value configuration file (flags take precedence)");
    app.allow_config_extras(CLI::config_extras_mode::error);

    // synth
    auto* synth = app.add_subcommand("synth", "generate a synthetic toy dataset");
    int s_maps = 200, s_size = 64, s_tx = 1;
    std::uint64_t s_seed = 0;
    std::string s_out;
    double s_pl0 = 20.0, s_gamma = 2.5, s_wall = 10.0;
    synth->add_option("--maps", s_maps, "number of maps")->capture_default_str();
    synth->add_option("--size", s_size, "grid size in pixels")->capture_default_str();
    synth->add_option("--tx-per-map", s_tx, "transmitters per map")->capture_default_str();
    synth->add_option("--seed", s_seed, "generator seed")->capture_default_str();
    synth->add_option("--out", s_out, "output directory")->required();
    synth->add_option("--pl0", s_pl0, "pathloss at 1 m (dB)")->capture_default_str();
    synth->add_option("--gamma", s_gamma, "log-distance exponent")->capture_default_str();
    synth->add_option("--wall-db", s_wall, "per-wall penalty (dB)")->capture_default_str();

    // train
    auto* train_cmd = app.add_subcommand("train", "train a model");
    std::string t_manifest, t_group = "c4", t_out, t_counts = "500,100,100", t_scale = "1";
    bool t_cars = false;
    TrainConfig tc;
    tc.max_epochs = 20;
    train_cmd->add_option("--manifest", t_manifest, "dataset manifest path")->required();
    train_cmd->add_option("--group", t_group, "symmetry group (c2,c4,c8,d2,d4,d8)")
        ->capture_default_str();
    train_cmd->add_option("--out", t_out, "output directory")->required();
    train_cmd->add_option("--split-counts", t_counts, "train,val,test map counts")
        ->capture_default_str();
    train_cmd->add_option("--width-scale", t_scale, "width multiplier (e.g. 1/4)")
        ->capture_default_str();
    train_cmd->add_flag("--with-cars", t_cars, "use the car channel");
    train_cmd->add_option("--lr", tc.learning_rate, "learning rate")->capture_default_str();
    train_cmd->add_option("--batch", tc.batch_size, "batch size")->capture_default_str();
    train_cmd->add_option("--epochs", tc.max_epochs, "training epochs")->capture_default_str();
    train_cmd->add_option("--lr-decay", tc.lr_decay_factor, "plateau decay factor")
        ->capture_default_str();
    train_cmd->add_option("--lr-patience", tc.lr_patience, "plateau patience (epochs)")
        ->capture_default_str();
    train_cmd->add_option("--seed", tc.seed, "training seed")->capture_default_str();
    train_cmd->add_flag("--mask-buildings", tc.loss_mask_buildings,
                        "exclude building pixels from the loss");

    // eval
    auto* eval_cmd = app.add_subcommand("eval", "evaluate a checkpoint");
    std::string e_ckpt, e_manifest, e_split = "test", e_counts = "500,100,100", e_csv;
    bool e_mask = false;
    eval_cmd->add_option("--checkpoint", e_ckpt, "checkpoint path")->required();
    eval_cmd->add_option("--manifest", e_manifest, "dataset manifest path")->required();
    eval_cmd->add_option("--split", e_split, "train, val, test, or all")->capture_default_str();
    eval_cmd->add_option("--split-counts", e_counts, "train,val,test map counts")
        ->capture_default_str();
    eval_cmd->add_flag("--mask-buildings", e_mask, "exclude building pixels from metrics");
    eval_cmd->add_option("--out", e_csv, "per-sample CSV path");

    // predict
    auto* predict = app.add_subcommand("predict", "predict a radio map for one layout");
    std::string p_ckpt, p_layout, p_tx, p_out, p_cars;
    bool p_mask = false;
    predict->add_option("--checkpoint", p_ckpt, "checkpoint path")->required();
    predict->add_option("--layout", p_layout, "building layout PNG")->required();
    predict->add_option("--tx", p_tx, "transmitter position X,Y (column,row)")->required();
    predict->add_option("--out", p_out, "output PNG path")->required();
    predict->add_option("--cars", p_cars, "car layout PNG (for with-cars checkpoints)");
    predict->add_flag("--mask-buildings", p_mask, "zero out building pixels in the output");

    // verify
    auto* verify = app.add_subcommand("verify", "run the verification suite");
    std::string v_group = "c4", v_report;
    bool v_full = false, v_fault = false;
    int v_size = 64;
    verify->add_option("--group", v_group, "symmetry group")->capture_default_str();
    verify->add_flag("--full", v_full, "include the 64-bit finite-difference suite");
    verify->add_option("--report", v_report, "write a JSON report");
    verify->add_option("--model-size", v_size, "input size for the full-model check")
        ->capture_default_str();
    verify->add_flag("--inject-fiber-fault", v_fault,
                     "test hook: corrupt the reference fiber permutation")
        ->group("");  // hidden

    try {
        app.parse(argc, argv);
    } catch (const CLI::ParseError& e) {
        const int code = app.exit(e);
        return code == 0 ? kExitSuccess : kExitUsage;
    }

    try {
        if (*synth) return cmd_synth(s_maps, s_size, s_tx, s_seed, s_out, s_pl0, s_gamma, s_wall);
        if (*train_cmd) return cmd_train(t_manifest, t_group, t_out, t_counts, t_scale, t_cars, tc);
        if (*eval_cmd) return cmd_eval(e_ckpt, e_manifest, e_split, e_counts, e_mask, e_csv);
        if (*predict) return cmd_predict(p_ckpt, p_layout, p_tx, p_out, p_cars, p_mask);
        if (*verify) return cmd_verify(v_group, v_full, v_report, v_fault, v_size);
    } catch (const UsageError& e) {
        std::cerr << "error: " << e.what() << "\n";
        return kExitUsage;
    } catch (const std::invalid_argument& e) {
        std::cerr << "error: " << e.what() << "\n";
        return kExitUsage;
    } catch (const std::exception& e) {
        std::cerr << "error: " << e.what() << "\n";
        return kExitUsage;
    }
    return kExitUsage;
}
