// strataclip command-line front end. Talks to the library through the C API only.
//
// Exit codes: 0 success, 2 usage or validation error, 1 runtime failure.

#include <cstdio>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <optional>
#include <string>
#include <vector>

#include <CLI11.hpp>
#include <fmt/format.h>
#include <nlohmann/json.hpp>

#include "strataclip/strataclip.h"

namespace {

constexpr int kExitRuntime = 1;
constexpr int kExitUsage = 2;
constexpr const char* kOutputDirEnv = "STRATACLIP_OUTPUT_DIR";

struct CommandError {
  int exit_code;
  std::string message;
};

void check(sc_status status, const std::string& context) {
  if (status == SC_OK) return;
  const int code =
      (status == SC_ERR_INVALID_ARGUMENT || status == SC_ERR_PARSE) ? kExitUsage : kExitRuntime;
  throw CommandError{code, fmt::format("{}: {}", context, sc_last_error())};
}

template <typename T, void (*Free)(T*)>
struct Handle {
  T* ptr = nullptr;
  Handle() = default;
  Handle(const Handle&) = delete;
  Handle& operator=(const Handle&) = delete;
  ~Handle() { Free(ptr); }
  T** out() { return &ptr; }
  T* get() const { return ptr; }
};

using Distribution = Handle<sc_distribution, sc_distribution_free>;
using Corpus = Handle<sc_corpus, sc_corpus_free>;
using BalanceCorpus = Handle<sc_balance_corpus, sc_balance_corpus_free>;
using Plan = Handle<sc_timeline_plan, sc_timeline_plan_free>;

// A header plus rows of scalars, rendered as CSV or as a JSON array of objects.
struct Table {
  std::vector<std::string> header;
  std::vector<std::vector<nlohmann::json>> rows;

  std::string csv() const {
    std::string out = fmt::format("{}\n", fmt::join(header, ","));
    for (const auto& row : rows) {
      std::vector<std::string> cells;
      for (const auto& v : row) {
        if (v.is_string()) cells.push_back(v.get<std::string>());
        else if (v.is_number_float()) cells.push_back(fmt::format("{}", v.get<double>()));
        else cells.push_back(v.dump());
      }
      out += fmt::format("{}\n", fmt::join(cells, ","));
    }
    return out;
  }

  std::string json() const {
    nlohmann::json doc = nlohmann::json::array();
    for (const auto& row : rows) {
      nlohmann::json obj = nlohmann::json::object();
      for (std::size_t i = 0; i < header.size(); ++i) obj[header[i]] = row[i];
      doc.push_back(std::move(obj));
    }
    return doc.dump(2) + "\n";
  }
};

struct OutputOptions {
  std::string out;
  std::string format = "csv";
};

void add_output_options(CLI::App* cmd, OutputOptions& o) {
  cmd->add_option("--out", o.out, fmt::format("Output file (default: stdout, or ${}/<command>.<ext>)", kOutputDirEnv));
  cmd->add_option("--format", o.format, "Output format")->check(CLI::IsMember({"csv", "json"}));
}

// Resolves --out, then the output-directory environment variable, then stdout.
std::optional<std::filesystem::path> destination(const std::string& out, const std::string& default_name) {
  if (out == "-") return std::nullopt;
  if (!out.empty()) return std::filesystem::path(out);
  if (const char* dir = std::getenv(kOutputDirEnv); dir && *dir) return std::filesystem::path(dir) / default_name;
  return std::nullopt;
}

void emit(const std::string& text, const std::optional<std::filesystem::path>& dest) {
  if (!dest) {
    std::fwrite(text.data(), 1, text.size(), stdout);
    std::fflush(stdout);
    return;
  }
  std::ofstream f(*dest, std::ios::binary);
  if (!f) throw CommandError{kExitRuntime, fmt::format("cannot write '{}'", dest->string())};
  f << text;
  if (!f) throw CommandError{kExitRuntime, fmt::format("write failed for '{}'", dest->string())};
}

void emit_table(const Table& t, const OutputOptions& o, const std::string& stem) {
  const std::string ext = o.format == "json" ? "json" : "csv";
  emit(o.format == "json" ? t.json() : t.csv(), destination(o.out, stem + "." + ext));
}

// ---- gen-corpus -------------------------------------------------------------

struct GenCorpusArgs {
  std::uint64_t n = 0;
  std::uint64_t seed = 0;
  std::string dist;
  std::string out;
};

void run_gen_corpus(const GenCorpusArgs& a) {
  Distribution dist;
  if (a.dist.empty()) check(sc_distribution_default(dist.out()), "distribution");
  else check(sc_distribution_load(a.dist.c_str(), dist.out()), a.dist);
  Corpus corpus;
  check(sc_corpus_generate(dist.get(), a.n, a.seed, corpus.out()), "gen-corpus");
  const auto dest = destination(a.out, "corpus.txt");
  const std::string path = dest ? dest->string() : "-";
  check(sc_corpus_write(corpus.get(), path.c_str()), "gen-corpus");
}

// ---- balance ----------------------------------------------------------------

struct BalanceArgs {
  std::string strategy = "local_presort";
  std::string scan = "snake";
  int gpus = 64;
  int nodes = 0;
  int local_batch = 16;
  std::int64_t trials = 10000;
  bool full = false;
  std::uint64_t seed = 0;
  std::string corpus;
  std::string dist;
  std::uint64_t corpus_size = 500000;
  std::uint64_t corpus_seed = 0;
  bool corpus_seed_set = false;
  int max_seq_len = 512;
  std::vector<int> boundaries{128, 256, 384, 512};
  int pack_limit = 2;
  unsigned threads = 0;
  bool ablation = false;
  OutputOptions output;
};

Table balance_table(const std::vector<sc_balance_stats>& rows) {
  Table t;
  t.header = {"strategy", "gpus", "local_batch", "trials", "avg_min", "avg_max", "avg_range", "stderr_min", "stderr_max"};
  for (const auto& r : rows)
    t.rows.push_back({std::string(r.label), r.gpus, r.local_batch, r.trials, r.avg_min, r.avg_max, r.avg_range,
                      r.stderr_min, r.stderr_max});
  return t;
}

void run_balance(const BalanceArgs& a) {
  sc_balance_config cfg;
  sc_balance_config_init(&cfg);
  if (sc_strategy_from_name(a.strategy.c_str(), &cfg.strategy) != SC_OK)
    throw CommandError{kExitUsage, sc_last_error()};
  if (sc_scan_from_name(a.scan.c_str(), &cfg.scan) != SC_OK) throw CommandError{kExitUsage, sc_last_error()};

  const int nodes = a.nodes > 0 ? a.nodes : std::max(1, a.gpus / 8);
  if (a.gpus < 1 || a.gpus % nodes != 0)
    throw CommandError{kExitUsage, fmt::format("--gpus {} is not a multiple of --nodes {}", a.gpus, nodes)};
  cfg.num_nodes = nodes;
  cfg.gpus_per_node = a.gpus / nodes;
  cfg.local_batch = a.local_batch;
  cfg.trials = a.full ? 100000 : a.trials;
  cfg.seed = a.seed;
  cfg.pack_limit = a.pack_limit;
  cfg.threads = a.threads;

  Corpus corpus;
  int max_seq_len = a.max_seq_len;
  if (!a.corpus.empty()) {
    check(sc_corpus_load(a.corpus.c_str(), max_seq_len, corpus.out()), a.corpus);
  } else {
    Distribution dist;
    if (a.dist.empty()) check(sc_distribution_default(dist.out()), "distribution");
    else check(sc_distribution_load(a.dist.c_str(), dist.out()), a.dist);
    max_seq_len = sc_distribution_max_seq_len(dist.get());
    check(sc_corpus_generate(dist.get(), a.corpus_size, a.corpus_seed_set ? a.corpus_seed : a.seed, corpus.out()), "corpus");
  }
  BalanceCorpus prepared;
  check(sc_balance_corpus_create(corpus.get(), a.boundaries.data(), a.boundaries.size(), a.pack_limit, max_seq_len,
                                 prepared.out()),
        "corpus");

  std::vector<sc_balance_stats> rows;
  if (a.ablation) {
    rows.resize(SC_ABLATION_ROWS);
    check(sc_balance_ablation(prepared.get(), &cfg, rows.data()), "balance");
  } else {
    rows.resize(1);
    check(sc_balance_run(prepared.get(), &cfg, rows.data()), "balance");
  }
  emit_table(balance_table(rows), a.output, "balance");
}

// ---- timeline ---------------------------------------------------------------

struct TimelineArgs {
  std::string plan;
  std::vector<double> compute;
  std::vector<double> comm;
  std::vector<double> clip;
  double global_clip = -1.0;
  double norm_reduce = 0.0;
  std::vector<std::string> modes{"after_allreduce", "before_allreduce", "bucket_wise"};
  std::vector<std::size_t> buckets;
  std::vector<double> comm_scales{1.0};
  double bucket_overhead = 0.0;
  OutputOptions output;
};

void run_timeline(const TimelineArgs& a) {
  Plan plan;
  if (!a.plan.empty()) {
    check(sc_timeline_plan_load(a.plan.c_str(), plan.out()), a.plan);
  } else {
    // Without --compute: 8 buckets, communication 1.5x compute, per-bucket
    // clips that add up to the whole-gradient clip. Inline plans default to
    // zero clip costs, like plan files.
    const bool builtin = a.compute.empty();
    if (builtin && (!a.comm.empty() || !a.clip.empty()))
      throw CommandError{kExitUsage, "--comm and --clip need --compute"};
    if (!builtin && a.comm.empty()) throw CommandError{kExitUsage, "--compute needs --comm"};
    std::vector<double> compute = builtin ? std::vector<double>(8, 1.0) : a.compute;
    std::vector<double> comm = builtin ? std::vector<double>(8, 1.5) : a.comm;
    std::vector<double> clip =
        builtin ? std::vector<double>(8, 0.05) : a.clip.empty() ? std::vector<double>(compute.size(), 0.0) : a.clip;
    if (comm.size() != compute.size() || clip.size() != compute.size())
      throw CommandError{kExitUsage, "--compute, --comm and --clip need the same number of buckets"};
    double gclip = a.global_clip;
    if (gclip < 0.0) {
      gclip = 0.0;
      for (double c : clip) gclip += c;
    }
    check(sc_timeline_plan_create(compute.data(), comm.data(), clip.data(), compute.size(), gclip, a.norm_reduce,
                                  plan.out()),
          "plan");
  }

  std::vector<sc_clip_mode> modes;
  for (const auto& m : a.modes) {
    sc_clip_mode mode;
    if (sc_clip_mode_from_name(m.c_str(), &mode) != SC_OK) throw CommandError{kExitUsage, sc_last_error()};
    modes.push_back(mode);
  }

  std::size_t n_rows = 0;
  std::vector<sc_sweep_row> rows(modes.size() * std::max<std::size_t>(1, a.buckets.size()) * a.comm_scales.size());
  check(sc_timeline_sweep(plan.get(), modes.data(), modes.size(), a.buckets.empty() ? nullptr : a.buckets.data(),
                          a.buckets.size(), a.comm_scales.data(), a.comm_scales.size(), a.bucket_overhead,
                          rows.data(), rows.size(), &n_rows),
        "timeline");
  rows.resize(n_rows);

  Table t;
  t.header = {"mode", "B", "total_latency", "compute_busy", "comm_busy", "comm_scale"};
  for (const auto& r : rows)
    t.rows.push_back({std::string(sc_clip_mode_name(r.mode)), r.buckets, r.total_latency, r.compute_busy,
                      r.comm_busy, r.comm_scale});
  emit_table(t, a.output, "timeline");
}

// ---- train ------------------------------------------------------------------

struct TrainArgs {
  sc_train_config cfg{};
  std::string mode = "bucket_wise";
  std::uint64_t seed = 0;
  bool compare = false;
  int seeds = 20;
  std::vector<std::string> modes{"after_allreduce", "before_allreduce", "bucket_wise"};
  unsigned threads = 0;
  std::string summary_out;
  std::string trajectory_out;
  OutputOptions output;
};

sc_clip_mode mode_or_usage(const std::string& name) {
  sc_clip_mode mode;
  if (sc_clip_mode_from_name(name.c_str(), &mode) != SC_OK) throw CommandError{kExitUsage, sc_last_error()};
  return mode;
}

Table summary_table(const std::vector<sc_mode_summary>& rows) {
  Table t;
  t.header = {"mode", "mean_final_loss", "stderr"};
  for (const auto& r : rows)
    t.rows.push_back({std::string(sc_clip_mode_name(r.mode)), r.mean_final_loss, r.stderr_final_loss});
  return t;
}

Table trajectory_table(sc_train_config cfg, const std::vector<sc_clip_mode>& modes) {
  Table t;
  t.header = {"step"};
  std::vector<std::vector<double>> curves;
  for (sc_clip_mode m : modes) {
    cfg.mode = m;
    std::vector<double> losses(static_cast<std::size_t>(std::max(0, cfg.steps)));
    int32_t diverged = 0;
    check(sc_train_run(&cfg, nullptr, losses.data(), losses.size(), &diverged), sc_clip_mode_name(m));
    t.header.emplace_back(sc_clip_mode_name(m));
    curves.push_back(std::move(losses));
  }
  for (std::size_t s = 0; s < curves.front().size(); ++s) {
    std::vector<nlohmann::json> row{s + 1};
    for (const auto& c : curves) row.emplace_back(c[s]);
    t.rows.push_back(std::move(row));
  }
  return t;
}

void run_train(TrainArgs& a) {
  a.cfg.seed = a.seed;
  if (a.compare) {
    std::vector<sc_clip_mode> modes;
    for (const auto& m : a.modes) modes.push_back(mode_or_usage(m));
    std::vector<sc_mode_summary> rows(modes.size());
    check(sc_train_compare(&a.cfg, modes.data(), modes.size(), a.seeds, a.threads, rows.data(), nullptr), "train");
    emit_table(summary_table(rows), a.output, "train_summary");
    if (!a.trajectory_out.empty()) {
      OutputOptions o{a.trajectory_out, a.output.format};
      emit_table(trajectory_table(a.cfg, modes), o, "train_trajectory");
    }
    return;
  }

  const sc_clip_mode mode = mode_or_usage(a.mode);
  a.cfg.mode = mode;
  emit_table(trajectory_table(a.cfg, {mode}), a.output, "train_trajectory");
  if (!a.summary_out.empty()) {
    std::vector<sc_mode_summary> rows(1);
    check(sc_train_compare(&a.cfg, &mode, 1, 1, 1, rows.data(), nullptr), "train");
    emit_table(summary_table(rows), OutputOptions{a.summary_out, a.output.format}, "train_summary");
  }
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"strataclip: load-balance and gradient-clipping experiments for data-parallel training"};
  app.set_config("--config", "", "TOML/INI config file; command-line flags take precedence");
  app.require_subcommand(1);
  app.set_version_flag("--version", sc_version());

  GenCorpusArgs gen;
  auto* gen_cmd = app.add_subcommand("gen-corpus", "Generate a synthetic sequence-length corpus");
  gen_cmd->add_option("--n", gen.n, "Number of samples")->required();
  gen_cmd->add_option("--seed", gen.seed, "RNG seed")->required();
  gen_cmd->add_option("--dist", gen.dist, "Distribution config (JSON or key = value lines)");
  gen_cmd->add_option("--out", gen.out, "Output length list (default: stdout)");

  BalanceArgs bal;
  auto* bal_cmd = app.add_subcommand("balance", "Monte-Carlo per-GPU token-count balance");
  bal_cmd->add_option("--strategy", bal.strategy,
                      "none | stratified | global_presort | packing | local_presort");
  bal_cmd->add_option("--scan", bal.scan, "raster | snake");
  bal_cmd->add_option("--gpus", bal.gpus, "Total simulated GPUs");
  bal_cmd->add_option("--nodes", bal.nodes, "Nodes (default: gpus / 8)");
  bal_cmd->add_option("--local-batch", bal.local_batch, "Effective sequences per GPU");
  bal_cmd->add_option("--trials", bal.trials, "Monte-Carlo repetitions");
  bal_cmd->add_flag("--full", bal.full, "Use 100000 trials");
  bal_cmd->add_option("--seed", bal.seed, "RNG seed")->required();
  auto* corpus_opt = bal_cmd->add_option("--corpus", bal.corpus, "Length-list file");
  bal_cmd->add_option("--dist", bal.dist, "Distribution config for a generated corpus")->excludes(corpus_opt);
  bal_cmd->add_option("--corpus-size", bal.corpus_size, "Generated corpus size");
  auto* corpus_seed_opt =
      bal_cmd->add_option("--corpus-seed", bal.corpus_seed, "Seed for the generated corpus (default: --seed)");
  bal_cmd->add_option("--max-seq-len", bal.max_seq_len, "Maximum sequence length for --corpus");
  bal_cmd->add_option("--boundaries", bal.boundaries, "Stratum upper boundaries")->delimiter(',');
  bal_cmd->add_option("--pack-limit", bal.pack_limit, "Samples per pack");
  bal_cmd->add_option("--threads", bal.threads, "Worker threads (0 = all cores)");
  bal_cmd->add_flag("--ablation", bal.ablation, "Step-by-step table plus the global-presort reference");
  add_output_options(bal_cmd, bal.output);

  TimelineArgs tl;
  auto* tl_cmd = app.add_subcommand("timeline", "Iteration latency under each clipping mode");
  tl_cmd->add_option("--plan", tl.plan, "Plan file");
  tl_cmd->add_option("--compute", tl.compute, "Per-bucket backward durations")->delimiter(',');
  tl_cmd->add_option("--comm", tl.comm, "Per-bucket allreduce durations")->delimiter(',');
  tl_cmd->add_option("--clip", tl.clip, "Per-bucket clip durations")->delimiter(',');
  tl_cmd->add_option("--global-clip", tl.global_clip, "Whole-gradient clip duration (default: sum of --clip)");
  tl_cmd->add_option("--norm-reduce", tl.norm_reduce, "Extra collective before allreduce");
  tl_cmd->add_option("--modes", tl.modes, "Clip modes")->delimiter(',');
  tl_cmd->add_option("--buckets", tl.buckets, "Re-bucket the plan to these counts")->delimiter(',');
  tl_cmd->add_option("--comm-scale", tl.comm_scales, "Communication scaling factors")->delimiter(',');
  tl_cmd->add_option("--bucket-overhead", tl.bucket_overhead, "Fixed cost per bucket allreduce when re-bucketing");
  add_output_options(tl_cmd, tl.output);

  TrainArgs tr;
  sc_train_config_init(&tr.cfg);
  auto* tr_cmd = app.add_subcommand("train", "Toy data-parallel training under each clipping mode");
  tr_cmd->add_option("--mode", tr.mode, "after_allreduce | before_allreduce | bucket_wise");
  tr_cmd->add_option("--buckets", tr.cfg.buckets, "Gradient buckets");
  tr_cmd->add_option("--workers", tr.cfg.workers, "Simulated data-parallel workers");
  tr_cmd->add_option("--steps", tr.cfg.steps, "Training steps");
  tr_cmd->add_option("--seed", tr.seed, "RNG seed (first seed with --compare)")->required();
  tr_cmd->add_option("--threshold", tr.cfg.threshold, "Clip threshold c");
  tr_cmd->add_option("--lr", tr.cfg.lr, "Adam learning rate");
  tr_cmd->add_option("--beta1", tr.cfg.beta1);
  tr_cmd->add_option("--beta2", tr.cfg.beta2);
  tr_cmd->add_option("--eps", tr.cfg.eps);
  tr_cmd->add_option("--weight-decay", tr.cfg.weight_decay);
  tr_cmd->add_option("--warmup-steps", tr.cfg.warmup_steps);
  tr_cmd->add_option("--lr-init-ratio", tr.cfg.warmup_init_ratio, "Warmup starts at lr * ratio");
  tr_cmd->add_option("--lr-decay", tr.cfg.lr_decay, "1 = linear decay after warmup");
  tr_cmd->add_option("--end-lr-ratio", tr.cfg.end_lr_ratio);
  tr_cmd->add_option("--dim", tr.cfg.dim, "Parameter dimension");
  tr_cmd->add_option("--batch", tr.cfg.batch_per_worker, "Samples per worker mini-batch");
  tr_cmd->add_option("--noise", tr.cfg.noise, "Target noise standard deviation");
  tr_cmd->add_option("--outlier-rate", tr.cfg.outlier_rate);
  tr_cmd->add_option("--outlier-scale", tr.cfg.outlier_scale);
  tr_cmd->add_flag("--compare", tr.compare, "Summarize every mode over --seeds seeds");
  tr_cmd->add_option("--seeds", tr.seeds, "Seeds for --compare");
  tr_cmd->add_option("--modes", tr.modes, "Modes for --compare")->delimiter(',');
  tr_cmd->add_option("--threads", tr.threads, "Worker threads for --compare (0 = all cores)");
  tr_cmd->add_option("--summary-out", tr.summary_out, "Also write the summary CSV here");
  tr_cmd->add_option("--trajectory-out", tr.trajectory_out, "With --compare: first-seed trajectories");
  add_output_options(tr_cmd, tr.output);

  try {
    app.parse(argc, argv);
  } catch (const CLI::CallForHelp& e) {
    return app.exit(e);
  } catch (const CLI::CallForAllHelp& e) {
    return app.exit(e);
  } catch (const CLI::CallForVersion& e) {
    return app.exit(e);
  } catch (const CLI::ParseError& e) {
    app.exit(e);
    return kExitUsage;
  }

  try {
    if (*gen_cmd) run_gen_corpus(gen);
    else if (*bal_cmd) {
      bal.corpus_seed_set = corpus_seed_opt->count() > 0;
      run_balance(bal);
    }
    else if (*tl_cmd) run_timeline(tl);
    else if (*tr_cmd) run_train(tr);
  } catch (const CommandError& e) {
    std::cerr << "error: " << e.message << "\n";
    return e.exit_code;
  }
  return 0;
}
