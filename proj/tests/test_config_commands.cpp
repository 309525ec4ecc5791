#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <filesystem>
#include <sstream>
#include <string>
#include <vector>

#include "gdbn/commands.hpp"
#include "gdbn/config.hpp"
#include "gdbn/temporal_graph.hpp"

using namespace gdbn;
namespace fs = std::filesystem;

namespace {

fs::path fresh_dir(const std::string& name) {
    fs::path dir = fs::temp_directory_path() / ("gdbn_cmd_tests_" + name);
    fs::remove_all(dir);
    fs::create_directories(dir);
    return dir;
}

std::vector<std::string> lines_of(const std::string& text) {
    std::vector<std::string> lines;
    std::istringstream in(text);
    std::string line;
    while (std::getline(in, line)) lines.push_back(line);
    return lines;
}

std::vector<std::string> split_csv(const std::string& line) {
    std::vector<std::string> cells;
    std::istringstream in(line);
    std::string cell;
    while (std::getline(in, cell, ',')) cells.push_back(cell);
    return cells;
}

const char* kDatasetIni =
    "[dataset]\n"
    "m = 3\n"
    "p = 2\n"
    "T = 40\n"
    "r = 0.6\n"
    "mode = nl_inner\n"
    "seed = 5\n";

const char* kTrainIni =
    "[model]\n"
    "s_o = 4\n"
    "s_p = 2\n"
    "d_z = 2\n"
    "h = 4\n"
    "\n"
    "[train]\n"
    "epochs = 4\n"
    "batch_size = 8\n"
    "lr = 0.003\n"
    "seed = 3\n";

}  // namespace

TEST_CASE("ini parsing: sections, comments, and typed getters") {
    IniConfig cfg = IniConfig::parse(
        "# leading comment\n"
        "[dataset]\n"
        "m = 10      # trailing comment\n"
        "r = 0.95    ; alt comment\n"
        "mode = nl_outer\n"
        "flags = a, b , c\n"
        "\n"
        "[train]\n"
        "epochs = 200\n"
        "standardize = yes\n"
        "seed = 18446744073709551615\n");
    CHECK(cfg.has("dataset", "m"));
    CHECK(!cfg.has("dataset", "missing"));
    CHECK(cfg.get("dataset", "mode") == "nl_outer");
    CHECK(cfg.get_long("dataset", "m", 0) == 10);
    CHECK(cfg.get_double("dataset", "r", 0.0) == 0.95);
    CHECK(cfg.get_long("train", "epochs", 0) == 200);
    CHECK(cfg.get_bool("train", "standardize", false));
    CHECK(cfg.get_u64("train", "seed", 0) == 18446744073709551615ULL);
    CHECK(cfg.get_or("train", "absent", "fallback") == "fallback");
    CHECK(cfg.get_long("train", "absent", 77) == 77);

    std::vector<std::string> flags = cfg.get_list("dataset", "flags");
    REQUIRE(flags.size() == 3);
    CHECK(flags[0] == "a");
    CHECK(flags[1] == "b");
    CHECK(flags[2] == "c");

    std::vector<std::string> names = cfg.section_names();
    REQUIRE(names.size() == 2);
    CHECK(names[0] == "dataset");
    CHECK(names[1] == "train");
}

TEST_CASE("ini parsing: boolean spellings") {
    IniConfig cfg = IniConfig::parse(
        "[s]\na = true\nb = 1\nc = on\nd = false\ne = 0\nf = off\ng = no\nh = maybe\n");
    CHECK(cfg.get_bool("s", "a", false));
    CHECK(cfg.get_bool("s", "b", false));
    CHECK(cfg.get_bool("s", "c", false));
    CHECK(!cfg.get_bool("s", "d", true));
    CHECK(!cfg.get_bool("s", "e", true));
    CHECK(!cfg.get_bool("s", "f", true));
    CHECK(!cfg.get_bool("s", "g", true));
    CHECK_THROWS_WITH_AS((void)cfg.get_bool("s", "h", false), doctest::Contains("h"),
                         std::invalid_argument);
}

TEST_CASE("ini parsing errors carry line numbers and key names") {
    CHECK_THROWS_WITH_AS((void)IniConfig::parse("[s]\nx = 1\nx = 2\n"), doctest::Contains("x"),
                         std::invalid_argument);
    CHECK_THROWS_WITH_AS((void)IniConfig::parse("key = 1\n"), doctest::Contains("section"),
                         std::invalid_argument);
    CHECK_THROWS_WITH_AS((void)IniConfig::parse("[s]\nbroken line\n"), doctest::Contains("line 2"),
                         std::invalid_argument);
    IniConfig cfg = IniConfig::parse("[s]\nm = ten\nx = 1.5\n");
    CHECK_THROWS_WITH_AS((void)cfg.get_long("s", "m", 0), doctest::Contains("m"),
                         std::invalid_argument);
    CHECK_THROWS_AS((void)cfg.get_long("s", "x", 0), std::invalid_argument);  // non-integer
    CHECK_THROWS_AS((void)IniConfig::load_file("/nonexistent/path.ini"), std::invalid_argument);
}

TEST_CASE("ini require_known flags stray keys") {
    IniConfig cfg = IniConfig::parse("[dataset]\nm = 3\ntypo_key = 1\n");
    CHECK_THROWS_WITH_AS(cfg.require_known("dataset", {"m", "p", "T"}),
                         doctest::Contains("typo_key"), std::invalid_argument);
    cfg.require_known("missing-section", {"anything"});  // absent sections are fine
}

TEST_CASE("ini set/to_text round trip") {
    IniConfig cfg;
    cfg.set("b", "k2", "v2");
    cfg.set("a", "k1", "1");
    cfg.set("a", "k1", "2");  // update in place
    IniConfig back = IniConfig::parse(cfg.to_text());
    CHECK(back.get("a", "k1") == "2");
    CHECK(back.get("b", "k2") == "v2");
}

TEST_CASE("file digests match the reference byte hashes") {
    fs::path dir = fresh_dir("digest");
    write_file((dir / "empty.bin").string(), "");
    write_file((dir / "foobar.bin").string(), "foobar");
    CHECK(file_digest_hex((dir / "empty.bin").string()) == "cbf29ce484222325");
    CHECK(file_digest_hex((dir / "foobar.bin").string()) == "85944171f73967e8");
    CHECK_THROWS_AS((void)file_digest_hex((dir / "absent.bin").string()), std::invalid_argument);
    CHECK_THROWS_AS((void)read_file((dir / "absent.bin").string()), std::invalid_argument);
}

TEST_CASE("manifest JSON round trip") {
    RunManifest m;
    m.tool_version = tool_version();
    m.command = "generate";
    m.resolved_config = "[dataset]\nm = 3\n";
    m.seeds = {5, 7};
    m.inputs = {{"cfg.ini", "cbf29ce484222325"}};
    m.outputs = {{"series.csv", "85944171f73967e8"}, {"truth_tam.txt", "cbf29ce484222325"}};
    m.summary = {{"edges", "7"}, {"spectral_radius", "0.91"}};
    m.wall_seconds = 1.25;

    RunManifest back = manifest_from_json(manifest_to_json(m));
    CHECK(back.tool_version == m.tool_version);
    CHECK(back.command == "generate");
    CHECK(back.resolved_config == m.resolved_config);
    CHECK(back.seeds == m.seeds);
    REQUIRE(back.inputs.size() == 1);
    CHECK(back.inputs[0].path == "cfg.ini");
    REQUIRE(back.outputs.size() == 2);
    CHECK(back.outputs[1].digest == "cbf29ce484222325");
    REQUIRE(back.summary.size() == 2);
    CHECK(back.summary[0].first == "edges");
    CHECK(back.wall_seconds == 1.25);

    CHECK_THROWS_WITH_AS((void)manifest_from_json("not json at all"),
                         doctest::Contains("malformed"), std::runtime_error);
    CHECK_THROWS_AS((void)manifest_from_json("{\"command\": 3}"), std::runtime_error);
}

TEST_CASE("generate writes a self-verifying dataset directory, deterministically") {
    fs::path dir = fresh_dir("generate");
    const std::string cfg_path = (dir / "gen.ini").string();
    write_file(cfg_path, kDatasetIni);

    const std::string out_a = (dir / "data_a").string();
    const std::string out_b = (dir / "data_b").string();
    cmd_generate(cfg_path, out_a, std::nullopt);
    cmd_generate(cfg_path, out_b, std::nullopt);

    for (const char* name : {"series.csv", "truth_tam.txt", "gen_config.ini", "manifest.json"}) {
        CHECK(fs::exists(fs::path(out_a) / name));
    }
    CHECK(read_file(out_a + "/series.csv") == read_file(out_b + "/series.csv"));
    CHECK(read_file(out_a + "/truth_tam.txt") == read_file(out_b + "/truth_tam.txt"));

    verify_manifest_outputs(out_a);  // digests certify the files on disk
    RunManifest manifest = load_manifest(out_a);
    CHECK(manifest.command == "generate");
    CHECK(manifest.tool_version == tool_version());
    REQUIRE(manifest.seeds.size() == 1);
    CHECK(manifest.seeds[0] == 5);
    CHECK(manifest.outputs.size() == 3);
    bool has_radius = false;
    for (const auto& [key, value] : manifest.summary) has_radius |= key == "spectral_radius";
    CHECK(has_radius);

    // A seed override changes the data and is recorded.
    const std::string out_c = (dir / "data_c").string();
    cmd_generate(cfg_path, out_c, 99);
    CHECK(read_file(out_c + "/series.csv") != read_file(out_a + "/series.csv"));
    CHECK(load_manifest(out_c).seeds[0] == 99);

    // The ground truth satisfies the structural hypotheses.
    TemporalAdjacencyMatrix truth = tam_from_text(read_file(out_a + "/truth_tam.txt"));
    CHECK(validate_hypotheses(threshold(truth, 0.0)).ok());
}

TEST_CASE("generate rejects bad config values with the field name") {
    fs::path dir = fresh_dir("generate_bad");
    const std::string cfg_path = (dir / "gen.ini").string();
    write_file(cfg_path, "[dataset]\nm = 3\nr = 2.0\n");
    CHECK_THROWS_WITH_AS(cmd_generate(cfg_path, (dir / "out").string(), std::nullopt),
                         doctest::Contains("r"), std::invalid_argument);

    write_file(cfg_path, "[dataset]\nm = 3\nnot_a_key = 1\n");
    CHECK_THROWS_WITH_AS(cmd_generate(cfg_path, (dir / "out").string(), std::nullopt),
                         doctest::Contains("not_a_key"), std::invalid_argument);
}

TEST_CASE("train pipeline: artifacts, determinism, digest gate, resume") {
    fs::path dir = fresh_dir("train");
    const std::string gen_cfg = (dir / "gen.ini").string();
    write_file(gen_cfg, kDatasetIni);
    const std::string data = (dir / "data").string();
    cmd_generate(gen_cfg, data, std::nullopt);

    const std::string train_cfg = (dir / "train.ini").string();
    write_file(train_cfg, kTrainIni);

    const std::string out_a = (dir / "run_a").string();
    const std::string out_b = (dir / "run_b").string();
    cmd_train(data, train_cfg, out_a, std::nullopt);
    cmd_train(data, train_cfg, out_b, std::nullopt);

    for (const char* name : {"checkpoint.txt", "learned_tam.txt", "loss_table.csv", "manifest.json"}) {
        CHECK(fs::exists(fs::path(out_a) / name));
    }
    // Identical invocations are byte-identical end to end.
    CHECK(read_file(out_a + "/loss_table.csv") == read_file(out_b + "/loss_table.csv"));
    CHECK(read_file(out_a + "/learned_tam.txt") == read_file(out_b + "/learned_tam.txt"));

    std::vector<std::string> loss_lines = lines_of(read_file(out_a + "/loss_table.csv"));
    REQUIRE(loss_lines.size() == 5);  // header + 4 epochs
    CHECK(loss_lines[0] == "epoch,total,recon,kl,l1");
    CHECK(split_csv(loss_lines[1])[0] == "1");
    CHECK(split_csv(loss_lines[4])[0] == "4");

    // Split run: 2 epochs, checkpoint, then resume up to the same budget of 4.
    std::string half_ini(kTrainIni);
    const size_t at = half_ini.find("epochs = 4");
    REQUIRE(at != std::string::npos);
    half_ini.replace(at, 10, "epochs = 2");
    const std::string half_cfg = (dir / "train_half.ini").string();
    write_file(half_cfg, half_ini);

    const std::string out_half = (dir / "run_half").string();
    const std::string out_resumed = (dir / "run_resumed").string();
    cmd_train(data, half_cfg, out_half, std::nullopt);
    cmd_train(data, train_cfg, out_resumed, std::nullopt, out_half + "/checkpoint.txt");

    CHECK(read_file(out_resumed + "/learned_tam.txt") == read_file(out_a + "/learned_tam.txt"));
    std::vector<std::string> half_lines = lines_of(read_file(out_half + "/loss_table.csv"));
    std::vector<std::string> resumed_lines = lines_of(read_file(out_resumed + "/loss_table.csv"));
    REQUIRE(half_lines.size() == 3);
    REQUIRE(resumed_lines.size() == 3);
    CHECK(resumed_lines[1] == loss_lines[3]);  // epoch 3 matches the full run
    CHECK(resumed_lines[2] == loss_lines[4]);
    CHECK(split_csv(resumed_lines[1])[0] == "3");  // epoch numbering continues

    // Tampered data is refused; missing files are reported by name.
    const std::string series_path = data + "/series.csv";
    const std::string original = read_file(series_path);
    write_file(series_path, original + "9.0,9.0,9.0\n");
    CHECK_THROWS_WITH_AS(cmd_train(data, train_cfg, (dir / "run_c").string(), std::nullopt),
                         doctest::Contains("refusing"), std::runtime_error);
    fs::remove(series_path);
    CHECK_THROWS_WITH_AS(cmd_train(data, train_cfg, (dir / "run_c").string(), std::nullopt),
                         doctest::Contains("series.csv"), std::invalid_argument);
    write_file(series_path, original);  // restore for any later reuse
    verify_manifest_outputs(data);
}

TEST_CASE("eval scores a learned matrix and the sweep against the truth") {
    fs::path dir = fresh_dir("eval");
    const std::string gen_cfg = (dir / "gen.ini").string();
    write_file(gen_cfg, kDatasetIni);
    const std::string data = (dir / "data").string();
    cmd_generate(gen_cfg, data, std::nullopt);
    const std::string truth_path = data + "/truth_tam.txt";

    const std::string out = (dir / "eval_self").string();
    cmd_eval(truth_path, truth_path, 0.3, out);

    std::vector<std::string> metric_lines = lines_of(read_file(out + "/metrics.csv"));
    REQUIRE(metric_lines.size() == 2);
    CHECK(metric_lines[0] ==
          "omega,fdr,tpr,f1,shd,auroc,tp,fp,fn,tn,fp_within_range,fp_out_of_range");
    std::vector<std::string> cells = split_csv(metric_lines[1]);
    REQUIRE(cells.size() == 12);
    CHECK(std::stod(cells[0]) == 0.3);
    CHECK(std::stod(cells[1]) == 0.0);  // fdr
    CHECK(std::stod(cells[2]) == 1.0);  // tpr
    CHECK(std::stod(cells[3]) == 1.0);  // f1
    CHECK(std::stod(cells[4]) == 0.0);  // shd
    CHECK(std::stod(cells[5]) == 1.0);  // auroc

    std::vector<std::string> sweep_lines = lines_of(read_file(out + "/f1_sweep.csv"));
    REQUIRE(sweep_lines.size() == 20);  // header + 19 grid points
    CHECK(sweep_lines[0] == "omega,f1,fdr,tpr,shd,predicted_edges");

    const std::string report = read_file(out + "/eval_report.json");
    CHECK(report.find("\"auroc\"") != std::string::npos);
    CHECK(report.find("\"sweep\"") != std::string::npos);
    verify_manifest_outputs(out);
}

TEST_CASE("run_cli maps errors to exit codes") {
    fs::path dir = fresh_dir("cli");
    std::ostringstream out, err;

    CliOptions bad_command;
    bad_command.command = "frobnicate";
    CHECK(run_cli(bad_command, out, err) == 1);
    CHECK(err.str().find("error:") != std::string::npos);

    CliOptions missing_flag;
    missing_flag.command = "generate";  // no --config/--out
    err.str("");
    CHECK(run_cli(missing_flag, out, err) == 1);
    CHECK(err.str().find("--config") != std::string::npos);

    // Config-level mistakes are usage errors (1)...
    write_file((dir / "bad.ini").string(), "[dataset]\nm = 3\nr = 2.0\n");
    CliOptions bad_cfg;
    bad_cfg.command = "generate";
    bad_cfg.config_path = (dir / "bad.ini").string();
    bad_cfg.out_dir = (dir / "out").string();
    CHECK(run_cli(bad_cfg, out, err) == 1);

    // ...while tampered data is a runtime failure (2).
    write_file((dir / "gen.ini").string(), kDatasetIni);
    CliOptions gen;
    gen.command = "generate";
    gen.config_path = (dir / "gen.ini").string();
    gen.out_dir = (dir / "data").string();
    CHECK(run_cli(gen, out, err) == 0);

    write_file((dir / "data/series.csv").string(), "1.0,1.0,1.0\n");
    write_file((dir / "train.ini").string(), kTrainIni);
    CliOptions train;
    train.command = "train";
    train.dataset_dir = (dir / "data").string();
    train.config_path = (dir / "train.ini").string();
    train.out_dir = (dir / "run").string();
    err.str("");
    CHECK(run_cli(train, out, err) == 2);
    CHECK(err.str().find("digest mismatch") != std::string::npos);
}

TEST_CASE("eval honors the omega precedence: flag over config over default") {
    fs::path dir = fresh_dir("omega");
    write_file((dir / "gen.ini").string(), kDatasetIni);
    cmd_generate((dir / "gen.ini").string(), (dir / "data").string(), std::nullopt);
    const std::string truth = (dir / "data/truth_tam.txt").string();

    std::ostringstream out, err;
    CliOptions opts;
    opts.command = "eval";
    opts.learned_path = truth;
    opts.truth_path = truth;
    opts.out_dir = (dir / "eval_default").string();
    REQUIRE(run_cli(opts, out, err) == 0);
    auto written_omega = [](const std::string& dir_path) {
        return std::stod(split_csv(lines_of(read_file(dir_path + "/metrics.csv"))[1])[0]);
    };
    CHECK(written_omega(opts.out_dir) == 0.3);

    write_file((dir / "eval.ini").string(), "[eval]\nomega = 0.5\n");
    opts.config_path = (dir / "eval.ini").string();
    opts.out_dir = (dir / "eval_cfg").string();
    REQUIRE(run_cli(opts, out, err) == 0);
    CHECK(written_omega(opts.out_dir) == 0.5);

    opts.omega = 0.7;
    opts.out_dir = (dir / "eval_flag").string();
    REQUIRE(run_cli(opts, out, err) == 0);
    CHECK(written_omega(opts.out_dir) == 0.7);
}
