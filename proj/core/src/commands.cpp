#include "gdbn/commands.hpp"

#include <chrono>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <iomanip>
#include <sstream>
#include <stdexcept>

#include <json.hpp>

#include "gdbn/config.hpp"
#include "gdbn/datagen.hpp"
#include "gdbn/evaluation.hpp"
#include "gdbn/model.hpp"
#include "gdbn/rng.hpp"
#include "gdbn/temporal_graph.hpp"
#include "gdbn/training.hpp"
#include "gdbn/var_lasso.hpp"

namespace fs = std::filesystem;
using ordered_json = nlohmann::ordered_json;

namespace gdbn {

namespace {

std::string fmt_g(double v) {
    char buf[40];
    std::snprintf(buf, sizeof buf, "%.17g", v);
    return buf;
}

class WallTimer {
public:
    double seconds() const {
        return std::chrono::duration<double>(std::chrono::steady_clock::now() - t0_).count();
    }

private:
    std::chrono::steady_clock::time_point t0_ = std::chrono::steady_clock::now();
};

// ---- config <-> struct plumbing ---------------------------------------------

GenConfig gen_config_from_ini(const IniConfig& ini) {
    ini.require_known("dataset",
                      {"m", "p", "T", "r", "mode", "noise_sigma", "weight_lo", "weight_hi",
                       "negative_fraction", "burn_in", "max_tam_attempts", "stationarity_margin",
                       "seed"});
    GenConfig c;
    c.m = ini.get_long("dataset", "m", c.m);
    c.p = ini.get_long("dataset", "p", c.p);
    c.T = ini.get_long("dataset", "T", c.T);
    c.r = ini.get_double("dataset", "r", c.r);
    c.mode = sim_mode_from_string(ini.get_or("dataset", "mode", to_string(c.mode)));
    c.noise_sigma = ini.get_double("dataset", "noise_sigma", c.noise_sigma);
    c.weight_lo = ini.get_double("dataset", "weight_lo", c.weight_lo);
    c.weight_hi = ini.get_double("dataset", "weight_hi", c.weight_hi);
    c.negative_fraction = ini.get_double("dataset", "negative_fraction", c.negative_fraction);
    c.burn_in = ini.get_long("dataset", "burn_in", c.burn_in);
    c.max_tam_attempts = ini.get_long("dataset", "max_tam_attempts", c.max_tam_attempts);
    c.stationarity_margin = ini.get_double("dataset", "stationarity_margin", c.stationarity_margin);
    c.seed = ini.get_u64("dataset", "seed", c.seed);
    return c;
}

void echo_gen_config(IniConfig& echo, const GenConfig& c) {
    echo.set("dataset", "m", std::to_string(c.m));
    echo.set("dataset", "p", std::to_string(c.p));
    echo.set("dataset", "T", std::to_string(c.T));
    echo.set("dataset", "r", fmt_g(c.r));
    echo.set("dataset", "mode", to_string(c.mode));
    echo.set("dataset", "noise_sigma", fmt_g(c.noise_sigma));
    echo.set("dataset", "weight_lo", fmt_g(c.weight_lo));
    echo.set("dataset", "weight_hi", fmt_g(c.weight_hi));
    echo.set("dataset", "negative_fraction", fmt_g(c.negative_fraction));
    echo.set("dataset", "burn_in", std::to_string(c.burn_in));
    echo.set("dataset", "max_tam_attempts", std::to_string(c.max_tam_attempts));
    echo.set("dataset", "stationarity_margin", fmt_g(c.stationarity_margin));
    echo.set("dataset", "seed", std::to_string(c.seed));
}

GdbnConfig model_config_from_ini(const IniConfig& ini, long m) {
    ini.require_known("model", {"s_o", "s_p", "d_z", "h", "n_layers", "n_hidden"});
    GdbnConfig c;
    c.m = m;
    c.s_o = ini.get_long("model", "s_o", c.s_o);
    c.s_p = ini.get_long("model", "s_p", c.s_p);
    c.d_z = ini.get_long("model", "d_z", c.d_z);
    c.h = ini.get_long("model", "h", c.h);
    c.n_layers = ini.get_long("model", "n_layers", c.n_layers);
    c.n_hidden = ini.get_long("model", "n_hidden", c.n_hidden);
    return c;
}

TrainConfig train_config_from_ini(const IniConfig& ini) {
    ini.require_known("train",
                      {"lambda", "epochs", "batch_size", "mc_samples", "lr", "beta1", "beta2",
                       "eps", "seed", "improvement_tol", "patience", "standardize"});
    TrainConfig c;
    c.lambda = ini.get_double("train", "lambda", c.lambda);
    c.epochs = ini.get_long("train", "epochs", c.epochs);
    c.batch_size = ini.get_long("train", "batch_size", c.batch_size);
    c.mc_samples = ini.get_long("train", "mc_samples", c.mc_samples);
    c.adam.lr = ini.get_double("train", "lr", c.adam.lr);
    c.adam.beta1 = ini.get_double("train", "beta1", c.adam.beta1);
    c.adam.beta2 = ini.get_double("train", "beta2", c.adam.beta2);
    c.adam.eps = ini.get_double("train", "eps", c.adam.eps);
    c.seed = ini.get_u64("train", "seed", c.seed);
    c.improvement_tol = ini.get_double("train", "improvement_tol", c.improvement_tol);
    c.patience = ini.get_long("train", "patience", c.patience);
    c.standardize = ini.get_bool("train", "standardize", c.standardize);
    return c;
}

void echo_model_train(IniConfig& echo, const GdbnConfig& g, const TrainConfig& t) {
    echo.set("model", "m", std::to_string(g.m));
    echo.set("model", "s_o", std::to_string(g.s_o));
    echo.set("model", "s_p", std::to_string(g.s_p));
    echo.set("model", "d_z", std::to_string(g.d_z));
    echo.set("model", "h", std::to_string(g.h));
    echo.set("model", "n_layers", std::to_string(g.n_layers));
    echo.set("model", "n_hidden", std::to_string(g.n_hidden));
    echo.set("train", "lambda", fmt_g(t.lambda));
    echo.set("train", "epochs", std::to_string(t.epochs));
    echo.set("train", "batch_size", std::to_string(t.batch_size));
    echo.set("train", "mc_samples", std::to_string(t.mc_samples));
    echo.set("train", "lr", fmt_g(t.adam.lr));
    echo.set("train", "beta1", fmt_g(t.adam.beta1));
    echo.set("train", "beta2", fmt_g(t.adam.beta2));
    echo.set("train", "eps", fmt_g(t.adam.eps));
    echo.set("train", "seed", std::to_string(t.seed));
    echo.set("train", "improvement_tol", fmt_g(t.improvement_tol));
    echo.set("train", "patience", std::to_string(t.patience));
    echo.set("train", "standardize", t.standardize ? "true" : "false");
}

FileRecord input_record(const std::string& path) { return {path, file_digest_hex(path)}; }

FileRecord output_record(const std::string& dir, const std::string& rel) {
    return {rel, file_digest_hex(dir + "/" + rel)};
}

// ---- shared artifact writers -------------------------------------------------

const char* kSeriesFile = "series.csv";
const char* kTruthFile = "truth_tam.txt";
const char* kGenEchoFile = "gen_config.ini";

void write_dataset_dir(const TimeSeriesDataset& ds, const std::string& dir,
                       std::vector<FileRecord> inputs, double wall_seconds) {
    write_file(dir + "/" + kSeriesFile, series_to_csv(ds.values));
    write_file(dir + "/" + kTruthFile, to_text(ds.ground_truth));
    IniConfig echo;
    echo_gen_config(echo, ds.config);
    write_file(dir + "/" + kGenEchoFile, echo.to_text());

    RunManifest man;
    man.tool_version = tool_version();
    man.command = "generate";
    man.resolved_config = echo.to_text();
    man.seeds = {ds.config.seed};
    man.inputs = std::move(inputs);
    man.outputs = {output_record(dir, kSeriesFile), output_record(dir, kTruthFile),
                   output_record(dir, kGenEchoFile)};
    const long edges = static_cast<long>(threshold(ds.ground_truth, 0.0).edges.size());
    man.summary = {{"m", std::to_string(ds.config.m)},
                   {"p", std::to_string(ds.config.p)},
                   {"T", std::to_string(ds.config.T)},
                   {"mode", to_string(ds.config.mode)},
                   {"edges", std::to_string(edges)},
                   {"spectral_radius", fmt_g(companion_spectral_radius(ds.ground_truth))}};
    man.wall_seconds = wall_seconds;
    write_manifest(man, dir);
}

struct LoadedDataset {
    TimeSeriesDataset ds;
    std::vector<FileRecord> records;  // dataset files with their verified digests
};

LoadedDataset load_dataset_dir(const std::string& dir) {
    verify_manifest_outputs(dir);
    Tensor series = series_from_csv(read_file(dir + "/" + kSeriesFile));
    TemporalAdjacencyMatrix truth = tam_from_text(read_file(dir + "/" + kTruthFile));
    GenConfig cfg = gen_config_from_ini(IniConfig::load_file(dir + "/" + kGenEchoFile));
    if (series.cols() != truth.m) {
        throw std::runtime_error("dataset '" + dir + "': series has " +
                                 std::to_string(series.cols()) + " columns but the truth TAM has m=" +
                                 std::to_string(truth.m));
    }
    std::vector<FileRecord> records = {input_record(dir + "/" + kSeriesFile),
                                       input_record(dir + "/" + kTruthFile),
                                       input_record(dir + "/" + kGenEchoFile)};
    return {TimeSeriesDataset{std::move(series), std::move(truth), cfg}, std::move(records)};
}

std::string loss_table_csv(const TrainReport& rep) {
    std::ostringstream out;
    out << "epoch,total,recon,kl,l1\n";
    for (size_t i = 0; i < rep.total.size(); ++i) {
        out << rep.start_epoch + static_cast<long>(i) + 1 << ',' << fmt_g(rep.total[i]) << ','
            << fmt_g(rep.recon[i]) << ',' << fmt_g(rep.kl[i]) << ',' << fmt_g(rep.l1[i]) << '\n';
    }
    return out.str();
}

ordered_json metrics_json(const GraphMetrics& m) {
    return ordered_json{{"fdr", m.fdr}, {"tpr", m.tpr}, {"f1", m.f1}, {"shd", m.shd}};
}

ordered_json report_json(const EvaluationReport& rep) {
    ordered_json j;
    j["omega"] = rep.omega;
    j["auroc"] = rep.auroc;
    j["confusion"] = ordered_json{{"tp", rep.counts.tp},
                                  {"fp", rep.counts.fp},
                                  {"fn", rep.counts.fn},
                                  {"tn", rep.counts.tn},
                                  {"fp_within_range", rep.counts.fp_within_range},
                                  {"fp_out_of_range", rep.counts.fp_out_of_range}};
    j["metrics"] = metrics_json(rep.metrics);
    j["best_f1"] = rep.best_f1;
    j["best_omega"] = rep.best_omega;
    ordered_json sweep = ordered_json::array();
    for (const SweepPoint& pt : rep.sweep) {
        ordered_json row = metrics_json(pt.metrics);
        row["omega"] = pt.omega;
        row["predicted_edges"] = pt.predicted_edges;
        sweep.push_back(std::move(row));
    }
    j["sweep"] = std::move(sweep);
    return j;
}

void write_eval_files(const EvaluationReport& rep, const std::string& dir) {
    std::ostringstream metrics;
    metrics << "omega,fdr,tpr,f1,shd,auroc,tp,fp,fn,tn,fp_within_range,fp_out_of_range\n"
            << fmt_g(rep.omega) << ',' << fmt_g(rep.metrics.fdr) << ',' << fmt_g(rep.metrics.tpr)
            << ',' << fmt_g(rep.metrics.f1) << ',' << rep.metrics.shd << ',' << fmt_g(rep.auroc)
            << ',' << rep.counts.tp << ',' << rep.counts.fp << ',' << rep.counts.fn << ','
            << rep.counts.tn << ',' << rep.counts.fp_within_range << ','
            << rep.counts.fp_out_of_range << '\n';
    write_file(dir + "/metrics.csv", metrics.str());

    std::ostringstream sweep;
    sweep << "omega,f1,fdr,tpr,shd,predicted_edges\n";
    for (const SweepPoint& pt : rep.sweep) {
        sweep << fmt_g(pt.omega) << ',' << fmt_g(pt.metrics.f1) << ',' << fmt_g(pt.metrics.fdr)
              << ',' << fmt_g(pt.metrics.tpr) << ',' << pt.metrics.shd << ','
              << pt.predicted_edges << '\n';
    }
    write_file(dir + "/f1_sweep.csv", sweep.str());
    write_file(dir + "/eval_report.json", report_json(rep).dump(2) + "\n");
}

std::vector<std::pair<std::string, std::string>> eval_summary(const EvaluationReport& rep) {
    return {{"auroc", fmt_g(rep.auroc)},
            {"f1", fmt_g(rep.metrics.f1)},
            {"fdr", fmt_g(rep.metrics.fdr)},
            {"tpr", fmt_g(rep.metrics.tpr)},
            {"shd", std::to_string(rep.metrics.shd)},
            {"best_f1", fmt_g(rep.best_f1)},
            {"best_omega", fmt_g(rep.best_omega)}};
}

}  // namespace

std::string tool_version() {
#ifdef GDBN_VERSION
    return GDBN_VERSION;
#else
    return "0.0.0";
#endif
}

std::string read_file(const std::string& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw std::invalid_argument("cannot open '" + path + "'");
    std::ostringstream buf;
    buf << in.rdbuf();
    return buf.str();
}

void write_file(const std::string& path, const std::string& content) {
    const fs::path p(path);
    if (p.has_parent_path()) fs::create_directories(p.parent_path());
    std::ofstream out(p, std::ios::binary | std::ios::trunc);
    if (!out) throw std::runtime_error("cannot write '" + path + "'");
    out << content;
    if (!out) throw std::runtime_error("failed writing '" + path + "'");
}

std::string file_digest_hex(const std::string& path) {
    const std::string bytes = read_file(path);
    char buf[17];
    std::snprintf(buf, sizeof buf, "%016llx",
                  static_cast<unsigned long long>(fnv1a64(bytes)));
    return buf;
}

// ---- manifests ----------------------------------------------------------------

std::string manifest_to_json(const RunManifest& manifest) {
    ordered_json j;
    j["tool_version"] = manifest.tool_version;
    j["command"] = manifest.command;
    j["resolved_config"] = manifest.resolved_config;
    j["seeds"] = manifest.seeds;
    const auto files = [](const std::vector<FileRecord>& records) {
        ordered_json arr = ordered_json::array();
        for (const FileRecord& r : records) arr.push_back({{"path", r.path}, {"digest", r.digest}});
        return arr;
    };
    j["inputs"] = files(manifest.inputs);
    j["outputs"] = files(manifest.outputs);
    ordered_json summary;
    for (const auto& [k, v] : manifest.summary) summary[k] = v;
    j["summary"] = std::move(summary);
    j["wall_seconds"] = manifest.wall_seconds;
    return j.dump(2) + "\n";
}

RunManifest manifest_from_json(const std::string& text) {
    ordered_json j;
    try {
        j = ordered_json::parse(text);
    } catch (const std::exception& e) {
        throw std::runtime_error(std::string("manifest: malformed JSON: ") + e.what());
    }
    RunManifest man;
    try {
        man.tool_version = j.at("tool_version").get<std::string>();
        man.command = j.at("command").get<std::string>();
        man.resolved_config = j.at("resolved_config").get<std::string>();
        man.seeds = j.at("seeds").get<std::vector<uint64_t>>();
        const auto files = [](const ordered_json& arr) {
            std::vector<FileRecord> out;
            for (const auto& e : arr) {
                out.push_back({e.at("path").get<std::string>(), e.at("digest").get<std::string>()});
            }
            return out;
        };
        man.inputs = files(j.at("inputs"));
        man.outputs = files(j.at("outputs"));
        for (const auto& [k, v] : j.at("summary").items()) {
            man.summary.emplace_back(k, v.get<std::string>());
        }
        man.wall_seconds = j.at("wall_seconds").get<double>();
    } catch (const std::exception& e) {
        throw std::runtime_error(std::string("manifest: missing or mistyped field: ") + e.what());
    }
    return man;
}

void write_manifest(const RunManifest& manifest, const std::string& dir) {
    write_file(dir + "/manifest.json", manifest_to_json(manifest));
}

RunManifest load_manifest(const std::string& dir) {
    return manifest_from_json(read_file(dir + "/manifest.json"));
}

void verify_manifest_outputs(const std::string& dir) {
    const RunManifest man = load_manifest(dir);
    for (const FileRecord& rec : man.outputs) {
        const std::string path = dir + "/" + rec.path;
        if (!fs::exists(path)) {
            throw std::invalid_argument("missing file '" + path + "' named by " + dir +
                                        "/manifest.json");
        }
        const std::string actual = file_digest_hex(path);
        if (actual != rec.digest) {
            throw std::runtime_error("digest mismatch for '" + path + "': manifest records " +
                                     rec.digest + " but the file hashes to " + actual +
                                     "; refusing to use modified data");
        }
    }
}

// ---- generate -------------------------------------------------------------------

void cmd_generate(const std::string& config_path, const std::string& out_dir,
                  std::optional<uint64_t> seed_override) {
    WallTimer timer;
    const IniConfig ini = IniConfig::load_file(config_path);
    GenConfig cfg = gen_config_from_ini(ini);
    if (seed_override) cfg.seed = *seed_override;
    cfg.validate();
    const TemporalAdjacencyMatrix truth = sample_tam(cfg);
    TimeSeriesDataset ds = simulate(truth, cfg);
    write_dataset_dir(ds, out_dir, {input_record(config_path)}, timer.seconds());
}

// ---- train ----------------------------------------------------------------------

void cmd_train(const std::string& dataset_dir, const std::string& config_path,
               const std::string& out_dir, std::optional<uint64_t> seed_override,
               const std::string& resume_path) {
    WallTimer timer;
    const IniConfig ini = IniConfig::load_file(config_path);
    LoadedDataset loaded = load_dataset_dir(dataset_dir);
    const TimeSeriesDataset& ds = loaded.ds;

    GdbnConfig gcfg = model_config_from_ini(ini, ds.values.cols());
    TrainConfig tcfg = train_config_from_ini(ini);
    if (seed_override) tcfg.seed = *seed_override;
    gcfg.validate();
    tcfg.validate();

    std::vector<FileRecord> inputs = {input_record(config_path)};
    inputs.insert(inputs.end(), loaded.records.begin(), loaded.records.end());

    GdbnParams params;
    AdamOptimizer opt(tcfg.adam);
    long start_epoch = 0;
    if (!resume_path.empty()) {
        TrainingCheckpoint ck = checkpoint_from_text(read_file(resume_path));
        if (ck.config.m != gcfg.m || ck.config.s_o != gcfg.s_o || ck.config.s_p != gcfg.s_p ||
            ck.config.d_z != gcfg.d_z || ck.config.h != gcfg.h ||
            ck.config.n_layers != gcfg.n_layers || ck.config.n_hidden != gcfg.n_hidden) {
            throw std::invalid_argument("checkpoint '" + resume_path +
                                        "' was trained with a different model config");
        }
        params = std::move(ck.params);
        if (ck.adam_step > 0) opt.restore(ck.adam_step, std::move(ck.adam_m), std::move(ck.adam_v));
        start_epoch = ck.next_epoch;
        tcfg.seed = ck.train_seed;  // the original run's streams, fast-forwarded
        inputs.push_back(input_record(resume_path));
    } else {
        params = init_params(gcfg, tcfg.seed);
    }

    const WindowBatch windows = make_windows(ds, gcfg.s_o, gcfg.s_p, tcfg.standardize);
    const TrainReport report = train_loop(params, opt, windows, gcfg, tcfg, start_epoch);

    write_file(out_dir + "/checkpoint.txt",
               checkpoint_to_text(params, gcfg, opt, start_epoch + report.epochs_run, tcfg.seed));
    write_file(out_dir + "/learned_tam.txt", to_text(params.tam()));
    write_file(out_dir + "/loss_table.csv", loss_table_csv(report));

    IniConfig echo;
    echo_model_train(echo, gcfg, tcfg);

    RunManifest man;
    man.tool_version = tool_version();
    man.command = "train";
    man.resolved_config = echo.to_text();
    man.seeds = {tcfg.seed};
    man.inputs = std::move(inputs);
    man.outputs = {output_record(out_dir, "checkpoint.txt"),
                   output_record(out_dir, "learned_tam.txt"),
                   output_record(out_dir, "loss_table.csv")};
    man.summary = {{"epochs_run", std::to_string(report.epochs_run)},
                   {"start_epoch", std::to_string(report.start_epoch)},
                   {"early_stopped", report.early_stopped ? "true" : "false"},
                   {"kl_collapse", report.kl_collapse ? "true" : "false"},
                   {"train_seconds", fmt_g(report.wall_seconds)}};
    if (!report.total.empty()) {
        man.summary.emplace_back("final_total", fmt_g(report.total.back()));
        man.summary.emplace_back("final_recon", fmt_g(report.recon.back()));
        man.summary.emplace_back("final_kl", fmt_g(report.kl.back()));
        man.summary.emplace_back("final_l1", fmt_g(report.l1.back()));
    }
    man.wall_seconds = timer.seconds();
    write_manifest(man, out_dir);
}

// ---- eval -----------------------------------------------------------------------

void cmd_eval(const std::string& learned_path, const std::string& truth_path, double omega,
              const std::string& out_dir) {
    WallTimer timer;
    const TemporalAdjacencyMatrix learned = tam_from_text(read_file(learned_path));
    const TemporalAdjacencyMatrix truth_tam = tam_from_text(read_file(truth_path));
    const CausalTemporalGraph truth = threshold(truth_tam, 0.0);
    const EvaluationReport rep = evaluate(learned, truth, omega, default_omega_grid());
    write_eval_files(rep, out_dir);

    IniConfig echo;
    echo.set("eval", "omega", fmt_g(omega));

    RunManifest man;
    man.tool_version = tool_version();
    man.command = "eval";
    man.resolved_config = echo.to_text();
    man.inputs = {input_record(learned_path), input_record(truth_path)};
    man.outputs = {output_record(out_dir, "metrics.csv"), output_record(out_dir, "f1_sweep.csv"),
                   output_record(out_dir, "eval_report.json")};
    man.summary = eval_summary(rep);
    man.wall_seconds = timer.seconds();
    write_manifest(man, out_dir);
}

// ---- bench ----------------------------------------------------------------------

namespace {

struct BenchRun {
    SimMode mode = SimMode::nl_inner;
    long m = 0;
    uint64_t seed = 0;
    std::string method;
    std::string dataset_dir;  // shared per cell
    std::string run_dir;
    std::string label;
};

RunOutcome execute_bench_run(const BenchRun& run, const IniConfig& ini, double omega,
                             const LassoConfig& lasso_cfg) {
    RunOutcome outcome;
    outcome.dataset = run.label;
    outcome.method = run.method;
    outcome.seed = run.seed;

    LoadedDataset loaded = load_dataset_dir(run.dataset_dir);
    const TimeSeriesDataset& ds = loaded.ds;
    const CausalTemporalGraph truth = threshold(ds.ground_truth, 0.0);
    GdbnConfig gcfg = model_config_from_ini(ini, ds.values.cols());
    gcfg.validate();

    WallTimer timer;
    EvaluationReport rep;
    IniConfig echo;
    if (run.method == "gdbn") {
        TrainConfig tcfg = train_config_from_ini(ini);
        tcfg.seed = run.seed;
        if (!ini.has("train", "standardize")) {
            tcfg.standardize = ds.config.mode != SimMode::linear;
        }
        tcfg.validate();
        const TrainResult result = train(ds, gcfg, tcfg);
        outcome.train_seconds = result.report.wall_seconds;
        rep = evaluate(result.params.tam(), truth, omega, default_omega_grid());
        write_file(run.run_dir + "/learned_tam.txt", to_text(result.params.tam()));
        write_file(run.run_dir + "/loss_table.csv", loss_table_csv(result.report));
        echo_model_train(echo, gcfg, tcfg);
    } else if (run.method == "var_lasso") {
        const WindowBatch windows = make_windows(ds, gcfg.s_o, 1, false);
        const LassoResult fit = fit_lasso_var(windows, gcfg.s_o, lasso_cfg);
        outcome.train_seconds = timer.seconds();
        rep = evaluate(fit.coefficients, truth, omega, default_omega_grid());
        write_file(run.run_dir + "/learned_tam.txt", to_text(fit.coefficients));
        echo.set("baseline", "lambda_l1", fmt_g(lasso_cfg.lambda_l1));
        echo.set("baseline", "max_iterations", std::to_string(lasso_cfg.max_iterations));
        echo.set("baseline", "tolerance", fmt_g(lasso_cfg.tolerance));
        echo.set("baseline", "converged", fit.converged ? "true" : "false");
    } else {
        throw std::invalid_argument("unknown method '" + run.method +
                                    "' (expected gdbn or var_lasso)");
    }
    write_eval_files(rep, run.run_dir);
    echo.set("eval", "omega", fmt_g(omega));

    RunManifest man;
    man.tool_version = tool_version();
    man.command = "bench-run";
    man.resolved_config = echo.to_text();
    man.seeds = {run.seed};
    man.inputs = std::move(loaded.records);
    man.outputs = {output_record(run.run_dir, "learned_tam.txt"),
                   output_record(run.run_dir, "metrics.csv"),
                   output_record(run.run_dir, "f1_sweep.csv"),
                   output_record(run.run_dir, "eval_report.json")};
    if (run.method == "gdbn") {
        man.outputs.push_back(output_record(run.run_dir, "loss_table.csv"));
    }
    man.summary = eval_summary(rep);
    man.summary.emplace_back("dataset", run.label);
    man.summary.emplace_back("method", run.method);
    man.wall_seconds = timer.seconds();
    write_manifest(man, run.run_dir);

    outcome.ok = true;
    outcome.report = rep;
    return outcome;
}

std::string runs_csv(const std::vector<RunOutcome>& outcomes) {
    std::ostringstream out;
    out << "dataset,method,seed,ok,auroc,f1,fdr,tpr,shd,best_f1,best_omega,train_seconds,error\n";
    for (const RunOutcome& r : outcomes) {
        out << r.dataset << ',' << r.method << ',' << r.seed << ',' << (r.ok ? "true" : "false");
        if (r.ok) {
            out << ',' << fmt_g(r.report.auroc) << ',' << fmt_g(r.report.metrics.f1) << ','
                << fmt_g(r.report.metrics.fdr) << ',' << fmt_g(r.report.metrics.tpr) << ','
                << r.report.metrics.shd << ',' << fmt_g(r.report.best_f1) << ','
                << fmt_g(r.report.best_omega) << ',' << fmt_g(r.train_seconds) << ',';
        } else {
            out << ",,,,,,,,";
        }
        std::string msg = r.error;
        for (char& c : msg) {
            if (c == ',' || c == '\n') c = ';';
        }
        out << msg << '\n';
    }
    return out.str();
}

std::string aggregate_csv(const std::vector<Aggregate>& aggs) {
    std::ostringstream out;
    out << "dataset,method,runs,failures,auroc_mean,auroc_std,f1_mean,f1_std,best_f1_mean,"
           "fdr_mean,tpr_mean,shd_mean,seconds_mean\n";
    for (const Aggregate& a : aggs) {
        out << a.dataset << ',' << a.method << ',' << a.runs << ',' << a.failures << ','
            << fmt_g(a.auroc_mean) << ',' << fmt_g(a.auroc_std) << ',' << fmt_g(a.f1_mean) << ','
            << fmt_g(a.f1_std) << ',' << fmt_g(a.best_f1_mean) << ',' << fmt_g(a.fdr_mean) << ','
            << fmt_g(a.tpr_mean) << ',' << fmt_g(a.shd_mean) << ',' << fmt_g(a.seconds_mean)
            << '\n';
    }
    return out.str();
}

/// Datasets down the rows, methods across the columns, AUROC mean +/- std in
/// each cell — the shape of the usual multi-seed comparison table.
std::string summary_table(const std::vector<Aggregate>& aggs,
                          const std::vector<std::string>& methods) {
    std::vector<std::string> datasets;
    for (const Aggregate& a : aggs) {
        if (datasets.empty() || datasets.back() != a.dataset) datasets.push_back(a.dataset);
    }
    const auto cell = [&](const std::string& dataset, const std::string& method) -> std::string {
        for (const Aggregate& a : aggs) {
            if (a.dataset == dataset && a.method == method) {
                char buf[64];
                std::snprintf(buf, sizeof buf, "%.3f +/- %.3f", a.auroc_mean, a.auroc_std);
                std::string s = buf;
                if (a.failures > 0) s += " (" + std::to_string(a.failures) + " failed)";
                return s;
            }
        }
        return "-";
    };
    std::ostringstream out;
    out << std::left << std::setw(24) << "AUROC";
    for (const std::string& m : methods) out << std::setw(24) << m;
    out << '\n';
    for (const std::string& d : datasets) {
        out << std::left << std::setw(24) << d;
        for (const std::string& m : methods) out << std::setw(24) << cell(d, m);
        out << '\n';
    }
    return out.str();
}

}  // namespace

void cmd_bench(const std::string& config_path, const std::string& out_dir, long jobs) {
    WallTimer timer;
    if (jobs < 1) throw std::invalid_argument("jobs must be >= 1");
    const IniConfig ini = IniConfig::load_file(config_path);
    ini.require_known("bench", {"modes", "m_list", "seeds", "methods", "lasso_lambda",
                                "lasso_max_iterations", "lasso_tolerance"});

    std::vector<SimMode> modes;
    for (const std::string& s : ini.get_list("bench", "modes")) modes.push_back(sim_mode_from_string(s));
    if (modes.empty()) modes = {SimMode::nl_inner};
    std::vector<long> m_list = ini.get_long_list("bench", "m_list");
    if (m_list.empty()) m_list = {10};
    std::vector<uint64_t> seeds = ini.get_u64_list("bench", "seeds");
    if (seeds.empty()) seeds = {1, 2, 3, 4, 5};
    std::vector<std::string> methods = ini.get_list("bench", "methods");
    if (methods.empty()) methods = {"gdbn", "var_lasso"};

    LassoConfig lasso_cfg;
    lasso_cfg.lambda_l1 = ini.get_double("bench", "lasso_lambda", lasso_cfg.lambda_l1);
    lasso_cfg.max_iterations = ini.get_long("bench", "lasso_max_iterations", lasso_cfg.max_iterations);
    lasso_cfg.tolerance = ini.get_double("bench", "lasso_tolerance", lasso_cfg.tolerance);
    lasso_cfg.validate();
    ini.require_known("eval", {"omega"});
    const double omega = ini.get_double("eval", "omega", 0.3);

    // Generation pass: one dataset per (mode, m, seed) cell, shared by all
    // methods so their inputs are digest-identical.
    std::vector<BenchRun> runs;
    const GenConfig base = gen_config_from_ini(ini);
    for (const SimMode mode : modes) {
        for (const long m : m_list) {
            for (const uint64_t seed : seeds) {
                GenConfig cfg = base;
                cfg.mode = mode;
                cfg.m = m;
                cfg.seed = seed;
                cfg.validate();
                const std::string cell = to_string(mode) + "_m" + std::to_string(m) + "_seed" +
                                         std::to_string(seed);
                const std::string dataset_dir = out_dir + "/" + cell + "/dataset";
                WallTimer gen_timer;
                const TemporalAdjacencyMatrix truth = sample_tam(cfg);
                const TimeSeriesDataset ds = simulate(truth, cfg);
                write_dataset_dir(ds, dataset_dir, {input_record(config_path)}, gen_timer.seconds());
                for (const std::string& method : methods) {
                    BenchRun run;
                    run.mode = mode;
                    run.m = m;
                    run.seed = seed;
                    run.method = method;
                    run.dataset_dir = dataset_dir;
                    run.run_dir = out_dir + "/" + cell + "/" + method;
                    run.label = to_string(mode) + " m=" + std::to_string(m);
                    runs.push_back(std::move(run));
                }
            }
        }
    }

    std::vector<RunOutcome> outcomes(runs.size());
    parallel_for(static_cast<long>(runs.size()), jobs, [&](long i) {
        const BenchRun& run = runs[static_cast<size_t>(i)];
        try {
            outcomes[static_cast<size_t>(i)] = execute_bench_run(run, ini, omega, lasso_cfg);
        } catch (const std::exception& e) {
            RunOutcome& failed = outcomes[static_cast<size_t>(i)];
            failed.dataset = run.label;
            failed.method = run.method;
            failed.seed = run.seed;
            failed.ok = false;
            failed.error = e.what();
        }
    });

    const std::vector<Aggregate> aggs = aggregate_runs(outcomes);
    write_file(out_dir + "/runs.csv", runs_csv(outcomes));
    write_file(out_dir + "/aggregate.csv", aggregate_csv(aggs));
    write_file(out_dir + "/summary.txt", summary_table(aggs, methods));

    RunManifest man;
    man.tool_version = tool_version();
    man.command = "bench";
    man.resolved_config = read_file(config_path);
    man.seeds = seeds;
    man.inputs = {input_record(config_path)};
    man.outputs = {output_record(out_dir, "runs.csv"), output_record(out_dir, "aggregate.csv"),
                   output_record(out_dir, "summary.txt")};
    for (const Aggregate& a : aggs) {
        char buf[64];
        std::snprintf(buf, sizeof buf, "%.4f +/- %.4f", a.auroc_mean, a.auroc_std);
        man.summary.emplace_back(a.dataset + " / " + a.method + " auroc", buf);
    }
    man.wall_seconds = timer.seconds();
    write_manifest(man, out_dir);
}

// ---- gradcheck ------------------------------------------------------------------

namespace {

bool run_one_gradcheck(const std::string& name, const GdbnConfig& gcfg, long mc_samples,
                       uint64_t seed, std::ostream& out) {
    constexpr double kTol = 1e-4;
    GenConfig gen;
    gen.m = gcfg.m;
    gen.p = 2;
    gen.r = 0.5;
    gen.T = gcfg.s_o + gcfg.s_p + 24;
    gen.mode = SimMode::nl_inner;
    gen.seed = seed;
    const TimeSeriesDataset ds = simulate(sample_tam(gen), gen);
    const WindowBatch windows = make_windows(ds, gcfg.s_o, gcfg.s_p, true);

    GdbnParams params = init_params(gcfg, seed);
    const std::vector<long> offsets = {0, windows.window_count / 3, windows.window_count - 1};
    RngStream noise_rng(seed, "sampling");
    std::vector<Tensor> noise =
        draw_latent_noise(noise_rng, gcfg, static_cast<long>(offsets.size()), mc_samples);
    FdProblem problem = objective_fd_problem(params, gcfg, windows, offsets, std::move(noise), 0.01);
    const FdReport report = finite_difference_check(problem);

    const bool pass = report.within(kTol);
    out << "gradcheck " << name << ": max rel err " << std::scientific << std::setprecision(3)
        << report.max_rel_error << " over " << report.elements_checked << " elements (worst "
        << report.worst_param << ") -> " << (pass ? "PASS" : "FAIL") << '\n';
    out.unsetf(std::ios::floatfield);
    return pass;
}

}  // namespace

bool cmd_gradcheck(uint64_t seed, std::ostream& out) {
    GdbnConfig tiny;
    tiny.m = 3;
    tiny.s_o = 4;
    tiny.s_p = 2;
    tiny.d_z = 2;
    tiny.h = 4;
    bool ok = run_one_gradcheck("objective (m=3 s_o=4 s_p=2 d_z=2 h=4)", tiny, 1, seed, out);

    GdbnConfig deep = tiny;
    deep.n_layers = 2;
    ok = run_one_gradcheck("two message-passing layers", deep, 1, seed + 1, out) && ok;

    ok = run_one_gradcheck("two Monte Carlo draws", tiny, 2, seed + 2, out) && ok;
    return ok;
}

// ---- dispatch ---------------------------------------------------------------------

int run_cli(const CliOptions& opts, std::ostream& out, std::ostream& err) {
    try {
        const auto need = [](const std::string& value, const char* flag) {
            if (value.empty()) {
                throw std::invalid_argument(std::string("missing required ") + flag);
            }
        };
        if (opts.command == "generate") {
            need(opts.config_path, "--config");
            need(opts.out_dir, "--out");
            cmd_generate(opts.config_path, opts.out_dir, opts.seed);
            out << "wrote dataset to " << opts.out_dir << '\n';
        } else if (opts.command == "train") {
            need(opts.dataset_dir, "--data");
            need(opts.config_path, "--config");
            need(opts.out_dir, "--out");
            cmd_train(opts.dataset_dir, opts.config_path, opts.out_dir, opts.seed,
                      opts.resume_path);
            out << "wrote model to " << opts.out_dir << '\n';
        } else if (opts.command == "eval") {
            need(opts.learned_path, "--learned");
            need(opts.truth_path, "--truth");
            need(opts.out_dir, "--out");
            double omega = 0.3;
            if (!opts.config_path.empty()) {
                const IniConfig ini = IniConfig::load_file(opts.config_path);
                ini.require_known("eval", {"omega"});
                omega = ini.get_double("eval", "omega", omega);
            }
            if (opts.omega) omega = *opts.omega;
            cmd_eval(opts.learned_path, opts.truth_path, omega, opts.out_dir);
            out << "wrote evaluation to " << opts.out_dir << '\n';
        } else if (opts.command == "bench") {
            need(opts.config_path, "--config");
            need(opts.out_dir, "--out");
            cmd_bench(opts.config_path, opts.out_dir, opts.jobs);
            out << "wrote benchmark results to " << opts.out_dir << '\n';
            out << read_file(opts.out_dir + "/summary.txt");
        } else if (opts.command == "gradcheck") {
            return cmd_gradcheck(opts.seed.value_or(0), out) ? 0 : 2;
        } else {
            throw std::invalid_argument("unknown command '" + opts.command +
                                        "' (expected generate|train|eval|bench|gradcheck)");
        }
        return 0;
    } catch (const std::invalid_argument& e) {
        err << "error: " << e.what() << '\n';
        return 1;
    } catch (const std::exception& e) {
        err << "error: " << e.what() << '\n';
        return 2;
    }
}

}  // namespace gdbn
