#pragma once

#include <cstdint>
#include <optional>
#include <ostream>
#include <string>
#include <utility>
#include <vector>

namespace gdbn {

/// Parsed command line. The front end (tools/) fills this in; everything
/// here is also callable directly from tests.
struct CliOptions {
    std::string command;      // generate | train | eval | bench | gradcheck
    std::string config_path;
    std::string out_dir;
    std::string dataset_dir;   // train: directory written by `generate`
    std::string resume_path;   // train: checkpoint.txt to continue from
    std::string learned_path;  // eval: learned TAM text file
    std::string truth_path;    // eval: ground-truth TAM text file
    std::optional<uint64_t> seed;  // overrides the config's seed
    std::optional<double> omega;   // overrides [eval] omega
    long jobs = 1;
};

std::string tool_version();

// ---- small file utilities ---------------------------------------------------

std::string read_file(const std::string& path);
/// Creates parent directories as needed.
void write_file(const std::string& path, const std::string& content);
/// FNV-1a 64 digest of the file's bytes, 16 lowercase hex chars.
std::string file_digest_hex(const std::string& path);

// ---- run manifests -----------------------------------------------------------

struct FileRecord {
    std::string path;    // outputs: relative to the manifest's directory
    std::string digest;  // fnv1a64 hex
};

/// Reproducibility record written next to every command's outputs. Output
/// digests are computed after the files are written, so a manifest certifies
/// exactly what is on disk.
struct RunManifest {
    std::string tool_version;
    std::string command;
    std::string resolved_config;  // INI echo of every setting the run used
    std::vector<uint64_t> seeds;
    std::vector<FileRecord> inputs;
    std::vector<FileRecord> outputs;
    std::vector<std::pair<std::string, std::string>> summary;  // ordered key/value
    double wall_seconds = 0.0;
};

std::string manifest_to_json(const RunManifest& manifest);
RunManifest manifest_from_json(const std::string& text);
/// dir + "/manifest.json"
void write_manifest(const RunManifest& manifest, const std::string& dir);
RunManifest load_manifest(const std::string& dir);
/// Recomputes the digest of every output the manifest names. Throws
/// invalid_argument on a missing file, runtime_error on a digest mismatch.
void verify_manifest_outputs(const std::string& dir);

// ---- subcommands -------------------------------------------------------------

/// Reads [dataset], simulates, writes series.csv, truth_tam.txt,
/// gen_config.ini and manifest.json under out_dir.
void cmd_generate(const std::string& config_path, const std::string& out_dir,
                  std::optional<uint64_t> seed_override);

/// Digest-checks the dataset directory, reads [model]/[train], trains, and
/// writes checkpoint.txt, learned_tam.txt, loss_table.csv and manifest.json.
/// A non-empty resume_path continues from that checkpoint (its epoch cursor
/// and training seed win, so the combined loss table matches a single
/// uninterrupted run).
void cmd_train(const std::string& dataset_dir, const std::string& config_path,
               const std::string& out_dir, std::optional<uint64_t> seed_override,
               const std::string& resume_path = {});

/// Scores a learned TAM against a ground-truth TAM at threshold omega;
/// writes metrics.csv, f1_sweep.csv, eval_report.json and manifest.json.
void cmd_eval(const std::string& learned_path, const std::string& truth_path, double omega,
              const std::string& out_dir);

/// Grid runner over [bench] modes x m_list x seeds x methods. Each cell's
/// dataset is generated once and shared by every method; each run writes to
/// its own directory; failures are recorded per run, not fatal. Emits
/// runs.csv, aggregate.csv and summary.txt at the top level.
void cmd_bench(const std::string& config_path, const std::string& out_dir, long jobs);

/// Finite-difference audit of the training objective on tiny models, one
/// line per check. Returns false when any check exceeds its tolerance.
bool cmd_gradcheck(uint64_t seed, std::ostream& out);

/// Dispatch plus exception mapping: 0 success, 1 usage/config error,
/// 2 runtime failure. Error text goes to `err`.
int run_cli(const CliOptions& opts, std::ostream& out, std::ostream& err);

}  // namespace gdbn
