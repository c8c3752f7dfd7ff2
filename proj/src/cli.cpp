// Copyright 2026 The treeinr Authors. All Rights Reserved.
//
// Licensed under the Apache License, Version 2.0 (the "License");
// you may not use this file except in compliance with the License.
// You may obtain a copy of the License at
//
//    http://www.apache.org/licenses/LICENSE-2.0
//
// Unless required by applicable law or agreed to in writing, software
// distributed under the License is distributed on an "AS IS" BASIS,
// WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
// See the License for the specific language governing permissions and
// limitations under the License.

#include "treeinr/cli.hpp"

#include <openssl/evp.h>

#include <algorithm>
#include <charconv>
#include <chrono>
#include <cmath>
#include <cstdlib>
#include <map>
#include <optional>
#include <sstream>
#include <system_error>

#include "CLI11.hpp"
#include "json.hpp"
#include "treeinr/codec.hpp"
#include "treeinr/errors.hpp"
#include "treeinr/metrics.hpp"

namespace treeinr {

namespace {

using json = nlohmann::ordered_json;

// ---- small helpers -------------------------------------------------------

/// Shortest decimal that parses back to the same double.
std::string num(double v) {
  if (std::isinf(v)) return v > 0 ? "inf" : "-inf";
  char buf[64];
  const auto r = std::to_chars(buf, buf + sizeof buf, v);
  return std::string(buf, r.ptr);
}

double parse_number(const std::string& text, const std::string& what) {
  double v = 0.0;
  const auto r = std::from_chars(text.data(), text.data() + text.size(), v);
  if (r.ec != std::errc() || r.ptr != text.data() + text.size() || !std::isfinite(v)) {
    throw ConfigError(what + ": '" + text + "' is not a finite number");
  }
  return v;
}

/// JSON number, or the string "inf" for infinities.
json json_number(double v) {
  if (std::isinf(v)) return v > 0 ? json("inf") : json("-inf");
  return v;
}

unsigned threads_from_env() {
  const char* raw = std::getenv("TINC_THREADS");
  if (raw == nullptr || *raw == '\0') return 0;
  const std::string text(raw);
  unsigned v = 0;
  const auto r = std::from_chars(text.data(), text.data() + text.size(), v);
  if (r.ec != std::errc() || r.ptr != text.data() + text.size()) {
    throw ConfigError("TINC_THREADS must be a non-negative integer, got '" + text + "'");
  }
  return v;
}

void write_text(const std::string& path, const std::string& text) {
  write_file(path, std::span<const std::uint8_t>(reinterpret_cast<const std::uint8_t*>(text.data()),
                                                 text.size()));
}

std::string file_digest(const std::string& path) { return sha256_hex(read_file(path)); }

// ---- volume inputs ---------------------------------------------------------

struct VolumeSource {
  std::string path;
  std::vector<int> shape;  // empty: .tvol container
  std::string dtype;

  void validate() const {
    if (path.empty()) throw ConfigError("an input path is required");
    if (shape.empty() != dtype.empty()) {
      throw ConfigError("raw input needs both --shape Z,Y,X and --dtype");
    }
    if (!shape.empty()) {
      if (shape.size() != 3) throw ConfigError("--shape takes three sizes Z,Y,X");
      for (const int s : shape) {
        if (s < 1) throw ConfigError("--shape sizes must be positive");
      }
      parse_dtype(dtype);
    }
  }

  Volume load() const {
    const auto bytes = read_file(path);
    if (shape.empty()) return decode_tvol(bytes);
    return load_raw(bytes, Dims{shape[0], shape[1], shape[2]}, parse_dtype(dtype));
  }

  void append_args(std::vector<std::string>& argv, const std::string& flag) const {
    argv.insert(argv.end(), {flag, path});
    if (!shape.empty()) {
      argv.insert(argv.end(), {"--shape", std::to_string(shape[0]) + "," + std::to_string(shape[1]) +
                                              "," + std::to_string(shape[2]),
                               "--dtype", dtype});
    }
  }

  json describe() const {
    json j{{"path", path}, {"sha256", file_digest(path)}};
    if (!shape.empty()) {
      j["shape"] = shape;
      j["dtype"] = dtype;
    }
    return j;
  }
};

void add_source_options(CLI::App* cmd, VolumeSource& src, const std::string& flag,
                        const std::string& help) {
  cmd->add_option(flag, src.path, help)->required();
  cmd->add_option("--shape", src.shape, "raw input dims Z,Y,X")->delimiter(',');
  cmd->add_option("--dtype", src.dtype, "raw input dtype: u8, u16 or f32");
}

// ---- metric requests ---------------------------------------------------------

struct MetricRequest {
  enum class Kind { Psnr, Ssim, Acc } kind;
  double tau = 0.0;
  std::string key;
};

std::vector<MetricRequest> parse_metrics(const std::vector<std::string>& tokens) {
  std::vector<MetricRequest> out;
  for (const std::string& t : tokens) {
    MetricRequest m{};
    if (t == "psnr") {
      m = {MetricRequest::Kind::Psnr, 0.0, "psnr"};
    } else if (t == "ssim") {
      m = {MetricRequest::Kind::Ssim, 0.0, "ssim"};
    } else if (t.rfind("acc:", 0) == 0) {
      const double tau = parse_number(t.substr(4), "acc threshold");
      m = {MetricRequest::Kind::Acc, tau, "acc:" + num(tau)};
    } else {
      throw ConfigError("unknown metric '" + t + "' (expected psnr, ssim or acc:TAU)");
    }
    const bool seen = std::any_of(out.begin(), out.end(),
                                  [&](const MetricRequest& o) { return o.key == m.key; });
    if (!seen) out.push_back(m);
  }
  return out;
}

json compute_metrics(const Volume& reference, const Volume& test,
                     const std::vector<MetricRequest>& requests) {
  json j = json::object();
  for (const auto& m : requests) {
    switch (m.kind) {
      case MetricRequest::Kind::Psnr: j[m.key] = json_number(psnr(reference, test)); break;
      case MetricRequest::Kind::Ssim: j[m.key] = ssim3d(reference, test); break;
      case MetricRequest::Kind::Acc: j[m.key] = acc_tau(reference, test, m.tau); break;
    }
  }
  return j;
}

// ---- manifests -----------------------------------------------------------------

json manifest_base(const std::string& command) {
  return json{{"tool", "treeinr"}, {"version", kToolVersion}, {"command", command}};
}

void write_manifest(json manifest, const std::vector<std::string>& argv, const std::string& output) {
  manifest["argv"] = argv;
  manifest["output"] = json{{"path", output}, {"sha256", file_digest(output)}};
  write_text(manifest_path(output), manifest.dump(2) + "\n");
}

// ---- compress ---------------------------------------------------------------------

struct CompressArgs {
  VolumeSource input;
  double ratio = 64.0;
  int levels = 1;
  int hyper_depth = 1;
  std::string inter_ratio = "1.0";
  std::string alloc = "even";
  double imp_threshold = 0.0;
  double floor_fraction = 0.1;
  std::size_t iters = 7000;
  std::size_t batch_per_leaf = 0;
  std::uint64_t seed = 0;
  std::string out;
  std::vector<std::string> eval;
  std::string log;
};

IntraLevel parse_alloc(const std::string& s) {
  if (s == "even") return IntraLevel::Even;
  if (s == "importance") return IntraLevel::Importance;
  throw ConfigError("--alloc must be 'even' or 'importance', got '" + s + "'");
}

std::string alloc_name(IntraLevel m) { return m == IntraLevel::Even ? "even" : "importance"; }

void register_compress(CLI::App& app, CompressArgs& a) {
  auto* cmd = app.add_subcommand("compress", "fit a tree network to a volume and write a .tinc file");
  add_source_options(cmd, a.input, "--input", ".tvol volume or raw bytes with --shape/--dtype");
  cmd->add_option("--ratio", a.ratio, "target compression ratio")->capture_default_str();
  cmd->add_option("--levels", a.levels, "tree levels (1-5)")->capture_default_str();
  cmd->add_option("--hyper-depth", a.hyper_depth, "hidden layers per node")->capture_default_str();
  cmd->add_option("--inter-ratio", a.inter_ratio, "budget ratio between adjacent levels, or 'auto'")
      ->capture_default_str();
  cmd->add_option("--alloc", a.alloc, "intra-level allocation: even or importance")->capture_default_str();
  cmd->add_option("--imp-threshold", a.imp_threshold, "importance threshold (raw intensity)")
      ->capture_default_str();
  cmd->add_option("--floor-fraction", a.floor_fraction, "minimum leaf share in importance mode")
      ->capture_default_str();
  cmd->add_option("--iters", a.iters, "training iterations")->capture_default_str();
  cmd->add_option("--batch-per-leaf", a.batch_per_leaf, "samples per leaf per step (0 = auto)")
      ->capture_default_str();
  cmd->add_option("--seed", a.seed, "random seed")->capture_default_str();
  cmd->add_option("--out", a.out, "output .tinc path")->required();
  cmd->add_option("--eval", a.eval, "metrics after compression: psnr,ssim,acc:TAU")->delimiter(',');
  cmd->add_option("--log", a.log, "write per-iteration JSON lines to this file");
}

struct ResolvedCompress {
  CompressOptions options;
  std::optional<double> global_consistency;
  std::vector<MetricRequest> metrics;
};

ResolvedCompress resolve_compress(const CompressArgs& a, const Volume& volume, unsigned threads) {
  ResolvedCompress r;
  CompressOptions& o = r.options;
  o.target_ratio = a.ratio;
  o.tree = TreeConfig{3, a.levels, a.hyper_depth};
  o.policy.intra = parse_alloc(a.alloc);
  o.policy.importance_threshold = a.imp_threshold;
  o.policy.floor_fraction = a.floor_fraction;
  o.train.iterations = a.iters;
  o.train.seed = a.seed;
  o.train.threads = threads;
  o.train.batch_per_leaf = a.batch_per_leaf;
  o.train.batch_per_leaf = o.train.resolved_batch_per_leaf(o.tree.leaf_count());
  if (a.inter_ratio == "auto") {
    const auto sim = region_similarity(volume, 3);
    r.global_consistency = sim.global_consistency;
    o.policy.inter_ratio = suggest_inter_ratio(sim.global_consistency);
  } else {
    o.policy.inter_ratio = parse_number(a.inter_ratio, "--inter-ratio");
  }
  o.tree.validate();
  o.policy.validate(o.tree.levels);
  o.train.validate();
  partition_octree(volume.dims(), o.tree.levels);
  return r;
}

void validate_compress_args(const CompressArgs& a) {
  a.input.validate();
  if (!(a.ratio >= 1.0)) throw ConfigError("--ratio must be >= 1");
  TreeConfig{3, a.levels, a.hyper_depth}.validate();
  if (a.inter_ratio != "auto" && !(parse_number(a.inter_ratio, "--inter-ratio") > 0.0)) {
    throw ConfigError("--inter-ratio must be positive or 'auto'");
  }
  parse_alloc(a.alloc);
  if (!(a.floor_fraction > 0.0 && a.floor_fraction <= 1.0)) {
    throw ConfigError("--floor-fraction must be in (0, 1]");
  }
  if (a.iters < 1) throw ConfigError("--iters must be >= 1");
  parse_metrics(a.eval);
  if (a.out.empty()) throw ConfigError("--out is required");
}

int cmd_compress(const CompressArgs& a, std::ostream& out) {
  validate_compress_args(a);
  const unsigned threads = threads_from_env();
  const Volume volume = a.input.load();
  const ResolvedCompress r = resolve_compress(a, volume, threads);
  const CompressOptions& o = r.options;

  std::ostringstream log;
  const CompressResult result = compress(volume, o, a.log.empty() ? nullptr : &log);
  write_file(a.out, result.bytes);
  if (!a.log.empty()) write_text(a.log, log.str());

  json report{{"command", "compress"},
              {"output", a.out},
              {"bytes", result.bytes.size()},
              {"raw_bytes", result.plan.raw_bytes},
              {"target_ratio", o.target_ratio},
              {"achieved_ratio", result.achieved_ratio},
              {"param_budget", result.plan.param_budget},
              {"realized_params", result.tree_plan.realized_params},
              {"levels", o.tree.levels},
              {"inter_ratio", o.policy.inter_ratio},
              {"widths", result.tree_plan.widths},
              {"iterations", result.train_report.iterations_run},
              {"final_loss", result.train_report.final_loss}};
  if (r.global_consistency) report["global_consistency"] = *r.global_consistency;
  const auto metrics = parse_metrics(a.eval);
  if (!metrics.empty()) {
    report["metrics"] = compute_metrics(volume, decompress(result.artifact, threads), metrics);
  }

  std::vector<std::string> argv{"compress"};
  a.input.append_args(argv, "--input");
  std::string eval_list;
  for (const auto& m : metrics) eval_list += (eval_list.empty() ? "" : ",") + m.key;
  argv.insert(argv.end(), {"--ratio", num(o.target_ratio), "--levels", std::to_string(o.tree.levels),
                           "--hyper-depth", std::to_string(o.tree.hyper_depth), "--inter-ratio",
                           num(o.policy.inter_ratio), "--alloc", alloc_name(o.policy.intra),
                           "--imp-threshold", num(o.policy.importance_threshold), "--floor-fraction",
                           num(o.policy.floor_fraction), "--iters", std::to_string(o.train.iterations),
                           "--batch-per-leaf", std::to_string(o.train.batch_per_leaf), "--seed",
                           std::to_string(o.train.seed), "--out", a.out});
  if (!eval_list.empty()) argv.insert(argv.end(), {"--eval", eval_list});

  json manifest = manifest_base("compress");
  manifest["options"] = json{{"ratio", o.target_ratio},
                             {"levels", o.tree.levels},
                             {"hyper_depth", o.tree.hyper_depth},
                             {"inter_ratio", o.policy.inter_ratio},
                             {"inter_ratio_mode", a.inter_ratio == "auto" ? "auto" : "fixed"},
                             {"alloc", alloc_name(o.policy.intra)},
                             {"imp_threshold", o.policy.importance_threshold},
                             {"floor_fraction", o.policy.floor_fraction},
                             {"iters", o.train.iterations},
                             {"batch_per_leaf", o.train.batch_per_leaf},
                             {"lr", o.train.base_lr},
                             {"warm_start_bias", o.train.warm_start_bias},
                             {"threads", threads},
                             {"eval", eval_list}};
  if (r.global_consistency) manifest["options"]["global_consistency"] = *r.global_consistency;
  manifest["seed"] = o.train.seed;
  manifest["input"] = a.input.describe();
  write_manifest(std::move(manifest), argv, a.out);
  out << report.dump(2) << "\n";
  return kExitOk;
}

// ---- decompress ------------------------------------------------------------------

struct DecompressArgs {
  std::string input;
  std::string out;
};

int cmd_decompress(const DecompressArgs& a, std::ostream& out) {
  if (a.input.empty() || a.out.empty()) throw ConfigError("--input and --out are required");
  const unsigned threads = threads_from_env();
  const auto bytes = read_file(a.input);
  const Volume volume = decompress(bytes, threads);
  write_file(a.out, encode_tvol(volume));

  json manifest = manifest_base("decompress");
  manifest["options"] = json{{"threads", threads}};
  manifest["seed"] = nullptr;
  manifest["input"] = json{{"path", a.input}, {"sha256", sha256_hex(bytes)}};
  write_manifest(std::move(manifest), {"decompress", "--input", a.input, "--out", a.out}, a.out);

  const auto& d = volume.dims();
  out << json{{"command", "decompress"},
              {"output", a.out},
              {"dims", {d[0], d[1], d[2]}},
              {"dtype", to_string(volume.dtype())}}
             .dump(2)
      << "\n";
  return kExitOk;
}

// ---- eval ---------------------------------------------------------------------------

struct EvalArgs {
  VolumeSource a;
  std::string b;
  std::vector<std::string> metrics{"psnr", "ssim"};
  std::string out;
};

int cmd_eval(const EvalArgs& e, std::ostream& out) {
  e.a.validate();
  if (e.b.empty()) throw ConfigError("--b is required");
  const auto requests = parse_metrics(e.metrics);
  if (requests.empty()) throw ConfigError("--metrics is empty");
  VolumeSource b = e.a;
  b.path = e.b;
  const Volume va = e.a.load();
  const Volume vb = b.load();
  if (va.dims() != vb.dims()) throw ConfigError("volumes have different dims");
  if (va.dtype() != vb.dtype()) throw ConfigError("volumes have different dtypes");

  json report{{"command", "eval"}, {"metrics", compute_metrics(va, vb, requests)}};
  const std::string text = report.dump(2) + "\n";
  if (!e.out.empty()) {
    write_text(e.out, text);
    std::string list;
    for (const auto& m : requests) list += (list.empty() ? "" : ",") + m.key;
    std::vector<std::string> argv{"eval"};
    e.a.append_args(argv, "--a");
    argv.insert(argv.end(), {"--b", e.b, "--metrics", list, "--out", e.out});
    json manifest = manifest_base("eval");
    manifest["options"] = json{{"metrics", list}};
    manifest["seed"] = nullptr;
    manifest["input"] = json::array({e.a.describe(), b.describe()});
    write_manifest(std::move(manifest), argv, e.out);
  }
  out << text;
  return kExitOk;
}

// ---- analyze --------------------------------------------------------------------------

struct AnalyzeArgs {
  VolumeSource input;
  int levels = 3;
  double rho = 0.25;
  std::string matrix_csv;
  std::string out;
};

int cmd_analyze(const AnalyzeArgs& a, std::ostream& out) {
  a.input.validate();
  if (!(a.rho > 0.0)) throw ConfigError("--rho must be positive");
  TreeConfig{3, a.levels, 1}.validate();
  const Volume volume = a.input.load();
  const auto sim = region_similarity(volume, a.levels);
  const double c = complexity(volume, a.rho);

  json report{{"command", "analyze"},
              {"levels", a.levels},
              {"rho", a.rho},
              {"complexity", c},
              {"global_consistency", sim.global_consistency},
              {"suggested_inter_ratio", suggest_inter_ratio(sim.global_consistency)},
              {"region_scores", std::vector<double>(sim.region_scores.begin(), sim.region_scores.end())}};
  const std::string text = report.dump(2) + "\n";

  std::vector<std::string> argv{"analyze"};
  a.input.append_args(argv, "--input");
  argv.insert(argv.end(), {"--levels", std::to_string(a.levels), "--rho", num(a.rho)});
  json manifest = manifest_base("analyze");
  manifest["options"] = json{{"levels", a.levels}, {"rho", a.rho}};
  manifest["seed"] = nullptr;
  if (!a.matrix_csv.empty() || !a.out.empty()) manifest["input"] = a.input.describe();

  if (!a.matrix_csv.empty()) {
    std::ostringstream csv;
    for (Eigen::Index i = 0; i < sim.raw.rows(); ++i) {
      for (Eigen::Index j = 0; j < sim.raw.cols(); ++j) csv << (j ? "," : "") << num(sim.raw(i, j));
      csv << "\n";
    }
    write_text(a.matrix_csv, csv.str());
    auto args = argv;
    args.insert(args.end(), {"--matrix-csv", a.matrix_csv});
    write_manifest(manifest, args, a.matrix_csv);
  }
  if (!a.out.empty()) {
    write_text(a.out, text);
    auto args = argv;
    args.insert(args.end(), {"--out", a.out});
    write_manifest(manifest, args, a.out);
  }
  out << text;
  return kExitOk;
}

// ---- sweep ------------------------------------------------------------------------------

struct SweepArgs {
  VolumeSource input;
  std::vector<double> ratios{64.0};
  std::vector<int> levels{1};
  std::vector<double> inter_ratios{1.0};
  std::vector<std::string> allocs{"even"};
  int hyper_depth = 1;
  double imp_threshold = 0.0;
  std::optional<double> acc_threshold;
  std::size_t iters = 7000;
  std::size_t batch_per_leaf = 0;
  std::uint64_t seed = 0;
  bool no_timing = false;
  std::string out;
};

int cmd_sweep(const SweepArgs& s, std::ostream& out) {
  s.input.validate();
  if (s.ratios.empty() || s.levels.empty() || s.inter_ratios.empty() || s.allocs.empty()) {
    throw ConfigError("sweep lists must not be empty");
  }
  for (const double r : s.ratios) {
    if (!(r >= 1.0)) throw ConfigError("sweep ratios must be >= 1");
  }
  for (const int l : s.levels) TreeConfig{3, l, s.hyper_depth}.validate();
  for (const double r : s.inter_ratios) {
    if (!(r > 0.0)) throw ConfigError("sweep inter ratios must be positive");
  }
  for (const auto& a : s.allocs) parse_alloc(a);
  if (s.iters < 1) throw ConfigError("--iters must be >= 1");
  const unsigned threads = threads_from_env();
  const Volume volume = s.input.load();
  const double tau = s.acc_threshold.value_or(0.5 * (volume.d_min() + volume.d_max()));

  struct Row {
    double ratio;
    int levels;
    double inter_ratio;
    std::string alloc;
    std::string status = "ok";
    double psnr = 0, ssim = 0, acc = 0, achieved = 0, seconds = 0;
  };
  std::vector<Row> rows;
  for (const double ratio : s.ratios) {
    for (const int levels : s.levels) {
      for (const double r : s.inter_ratios) {
        for (const auto& alloc : s.allocs) {
          Row row{ratio, levels, r, alloc};
          CompressOptions o;
          o.target_ratio = ratio;
          o.tree = TreeConfig{3, levels, s.hyper_depth};
          o.policy.inter_ratio = r;
          o.policy.intra = parse_alloc(alloc);
          o.policy.importance_threshold = s.imp_threshold;
          o.train.iterations = s.iters;
          o.train.seed = s.seed;
          o.train.batch_per_leaf = s.batch_per_leaf;
          o.train.threads = threads;
          const auto t0 = std::chrono::steady_clock::now();
          try {
            const auto result = compress(volume, o);
            const Volume decoded = decompress(result.artifact, threads);
            row.psnr = psnr(volume, decoded);
            row.ssim = ssim3d(volume, decoded);
            row.acc = acc_tau(volume, decoded, tau);
            row.achieved = result.achieved_ratio;
          } catch (const InfeasibleBudgetError&) {
            row.status = "infeasible";
          }
          row.seconds = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
          rows.push_back(row);
        }
      }
    }
  }

  std::ostringstream csv;
  csv << "ratio,levels,inter_ratio,alloc,status,psnr,ssim,ssim_growth,acc,achieved_ratio,wall_time\n";
  for (const Row& row : rows) {
    csv << num(row.ratio) << "," << row.levels << "," << num(row.inter_ratio) << "," << row.alloc << ","
        << row.status << ",";
    if (row.status != "ok") {
      csv << ",,,,,\n";
      continue;
    }
    // SSIM relative to the L=1 run with the same ratio, r and allocation.
    std::string growth;
    for (const Row& base : rows) {
      if (base.levels == 1 && base.ratio == row.ratio && base.inter_ratio == row.inter_ratio &&
          base.alloc == row.alloc && base.status == "ok") {
        growth = num(row.ssim / base.ssim);
      }
    }
    csv << num(row.psnr) << "," << num(row.ssim) << "," << growth << "," << num(row.acc) << ","
        << num(row.achieved) << "," << (s.no_timing ? std::string() : num(row.seconds)) << "\n";
  }

  if (!s.out.empty()) {
    write_text(s.out, csv.str());
    auto join = [](const auto& values, auto fmt) {
      std::string text;
      for (const auto& v : values) text += (text.empty() ? "" : ",") + fmt(v);
      return text;
    };
    const auto as_num = [](double v) { return num(v); };
    std::vector<std::string> argv{"sweep"};
    s.input.append_args(argv, "--input");
    argv.insert(argv.end(),
                {"--ratios", join(s.ratios, as_num), "--levels",
                 join(s.levels, [](int v) { return std::to_string(v); }), "--inter-ratios",
                 join(s.inter_ratios, as_num), "--alloc", join(s.allocs, [](const std::string& v) { return v; }),
                 "--hyper-depth", std::to_string(s.hyper_depth), "--imp-threshold", num(s.imp_threshold),
                 "--acc-threshold", num(tau), "--iters", std::to_string(s.iters), "--batch-per-leaf",
                 std::to_string(s.batch_per_leaf), "--seed", std::to_string(s.seed), "--out", s.out});
    if (s.no_timing) argv.push_back("--no-timing");
    json manifest = manifest_base("sweep");
    manifest["options"] = json{{"ratios", s.ratios},       {"levels", s.levels},
                               {"inter_ratios", s.inter_ratios}, {"alloc", s.allocs},
                               {"hyper_depth", s.hyper_depth},   {"imp_threshold", s.imp_threshold},
                               {"acc_threshold", tau},           {"iters", s.iters},
                               {"batch_per_leaf", s.batch_per_leaf}, {"no_timing", s.no_timing},
                               {"threads", threads}};
    manifest["seed"] = s.seed;
    manifest["input"] = s.input.describe();
    write_manifest(std::move(manifest), argv, s.out);
  } else {
    out << csv.str();
  }
  return kExitOk;
}

// ---- replay --------------------------------------------------------------------------------

struct ReplayArgs {
  std::string manifest;
  std::string out;
};

int cmd_replay(const ReplayArgs& r, std::ostream& out, std::ostream& err) {
  const auto bytes = read_file(r.manifest);
  json m;
  try {
    m = json::parse(bytes.begin(), bytes.end());
  } catch (const json::exception& e) {
    throw ConfigError("manifest is not valid JSON: " + std::string(e.what()));
  }
  if (!m.contains("argv") || !m["argv"].is_array() || !m.contains("output")) {
    throw ConfigError("manifest lacks argv/output fields");
  }
  auto argv = m["argv"].get<std::vector<std::string>>();
  if (argv.empty() || argv.front() == "replay") throw ConfigError("manifest has no replayable command");
  std::string target = m["output"]["path"].get<std::string>();
  if (!r.out.empty()) {
    // the recorded output flag is the one whose value is the recorded path
    for (std::size_t i = 1; i + 1 < argv.size(); ++i) {
      if (argv[i + 1] == target && (argv[i] == "--out" || argv[i] == "--matrix-csv")) argv[i + 1] = r.out;
    }
    target = r.out;
  }
  std::ostringstream inner_out;
  const int code = run_cli(argv, inner_out, err);
  if (code != kExitOk) return code;
  const std::string expected = m["output"]["sha256"].get<std::string>();
  const std::string actual = file_digest(target);
  out << json{{"command", "replay"},
              {"replayed", argv.front()},
              {"output", target},
              {"expected_sha256", expected},
              {"actual_sha256", actual},
              {"reproduced", expected == actual}}
             .dump(2)
      << "\n";
  return expected == actual ? kExitOk : kExitConfig;
}

// ---- error reporting ------------------------------------------------------------------------

int report_error(std::ostream& err, int code, const std::string& kind, const std::string& message,
                 json extra = json::object()) {
  json j{{"error", kind}, {"exit_code", code}, {"message", message}};
  for (auto it = extra.begin(); it != extra.end(); ++it) j[it.key()] = it.value();
  err << j.dump() << "\n";
  return code;
}

}  // namespace

std::string sha256_hex(std::span<const std::uint8_t> bytes) {
  unsigned char md[EVP_MAX_MD_SIZE];
  unsigned int len = 0;
  if (EVP_Digest(bytes.data(), bytes.size(), md, &len, EVP_sha256(), nullptr) != 1) {
    throw std::runtime_error("SHA-256 digest failed");
  }
  static constexpr char kHex[] = "0123456789abcdef";
  std::string out;
  for (unsigned i = 0; i < len; ++i) {
    out.push_back(kHex[md[i] >> 4]);
    out.push_back(kHex[md[i] & 0xF]);
  }
  return out;
}

std::string manifest_path(const std::string& output) { return output + ".manifest.json"; }

int run_cli(const std::vector<std::string>& args, std::ostream& out, std::ostream& err) {
  CLI::App app{"treeinr: volumetric compression with octree-shared sine networks", "treeinr"};
  app.set_version_flag("--version", kToolVersion);
  app.require_subcommand(1);

  CompressArgs compress_args;
  register_compress(app, compress_args);

  DecompressArgs decompress_args;
  auto* decompress_cmd = app.add_subcommand("decompress", "reconstruct a .tvol volume from a .tinc file");
  decompress_cmd->add_option("--input", decompress_args.input, ".tinc file")->required();
  decompress_cmd->add_option("--out", decompress_args.out, "output .tvol path")->required();

  EvalArgs eval_args;
  auto* eval_cmd = app.add_subcommand("eval", "compare two volumes");
  add_source_options(eval_cmd, eval_args.a, "--a", "reference volume");
  eval_cmd->add_option("--b", eval_args.b, "test volume (same format as --a)")->required();
  eval_cmd->add_option("--metrics", eval_args.metrics, "psnr,ssim,acc:TAU")->delimiter(',');
  eval_cmd->add_option("--out", eval_args.out, "also write the report to this file");

  AnalyzeArgs analyze_args;
  auto* analyze_cmd = app.add_subcommand("analyze", "complexity and inter-region similarity");
  add_source_options(analyze_cmd, analyze_args.input, "--input", "volume to analyze");
  analyze_cmd->add_option("--levels", analyze_args.levels, "partition levels")->capture_default_str();
  analyze_cmd->add_option("--rho", analyze_args.rho, "low-band fraction")->capture_default_str();
  analyze_cmd->add_option("--matrix-csv", analyze_args.matrix_csv, "write the raw similarity matrix");
  analyze_cmd->add_option("--out", analyze_args.out, "also write the report to this file");

  SweepArgs sweep_args;
  auto* sweep_cmd = app.add_subcommand("sweep", "compress over a grid of settings and emit CSV");
  add_source_options(sweep_cmd, sweep_args.input, "--input", "volume to sweep");
  sweep_cmd->add_option("--ratios", sweep_args.ratios, "target ratios")->delimiter(',');
  sweep_cmd->add_option("--levels", sweep_args.levels, "tree levels")->delimiter(',');
  sweep_cmd->add_option("--inter-ratios", sweep_args.inter_ratios, "inter-level ratios")->delimiter(',');
  sweep_cmd->add_option("--alloc", sweep_args.allocs, "even and/or importance")->delimiter(',');
  sweep_cmd->add_option("--hyper-depth", sweep_args.hyper_depth, "hidden layers per node")->capture_default_str();
  sweep_cmd->add_option("--imp-threshold", sweep_args.imp_threshold, "importance threshold (raw intensity)")
      ->capture_default_str();
  sweep_cmd->add_option("--acc-threshold", sweep_args.acc_threshold,
                        "Acc threshold (default: middle of the intensity range)");
  sweep_cmd->add_option("--iters", sweep_args.iters, "training iterations")->capture_default_str();
  sweep_cmd->add_option("--batch-per-leaf", sweep_args.batch_per_leaf, "samples per leaf per step (0 = auto)")
      ->capture_default_str();
  sweep_cmd->add_option("--seed", sweep_args.seed, "random seed")->capture_default_str();
  sweep_cmd->add_flag("--no-timing", sweep_args.no_timing, "leave wall_time empty");
  sweep_cmd->add_option("--out", sweep_args.out, "CSV path (default: stdout)");

  ReplayArgs replay_args;
  auto* replay_cmd = app.add_subcommand("replay", "re-run a manifest and compare output digests");
  replay_cmd->add_option("--manifest", replay_args.manifest, "manifest JSON")->required();
  replay_cmd->add_option("--out", replay_args.out, "write the output here instead");

  try {
    std::vector<std::string> reversed(args.rbegin(), args.rend());
    app.parse(reversed);
  } catch (const CLI::CallForHelp&) {
    out << app.help();
    return kExitOk;
  } catch (const CLI::CallForAllHelp&) {
    out << app.help("", CLI::AppFormatMode::All);
    return kExitOk;
  } catch (const CLI::CallForVersion&) {
    out << kToolVersion << "\n";
    return kExitOk;
  } catch (const CLI::ParseError& e) {
    std::string message = e.what();
    std::replace(message.begin(), message.end(), '\n', ' ');
    return report_error(err, kExitUsage, "usage", message);
  }

  try {
    if (app.got_subcommand("compress")) return cmd_compress(compress_args, out);
    if (app.got_subcommand("decompress")) return cmd_decompress(decompress_args, out);
    if (app.got_subcommand("eval")) return cmd_eval(eval_args, out);
    if (app.got_subcommand("analyze")) return cmd_analyze(analyze_args, out);
    if (app.got_subcommand("sweep")) return cmd_sweep(sweep_args, out);
    if (app.got_subcommand("replay")) return cmd_replay(replay_args, out, err);
    return report_error(err, kExitUsage, "usage", "no command given");
  } catch (const InfeasibleBudgetError& e) {
    json extra{{"minimal_budget", e.minimal_budget()}};
    if (e.max_feasible_ratio() > 0.0) extra["max_feasible_ratio"] = e.max_feasible_ratio();
    return report_error(err, kExitConfig, "infeasible-budget", e.what(), extra);
  } catch (const ConfigError& e) {
    return report_error(err, kExitConfig, "config", e.what());
  } catch (const FormatError& e) {
    return report_error(err, kExitFormat, to_string(e.kind()), e.what());
  } catch (const MalformedInputError& e) {
    return report_error(err, kExitFormat, "malformed-input", e.what());
  } catch (const DivergedError& e) {
    return report_error(err, kExitDiverged, "training-diverged", e.what(),
                        json{{"iteration", e.iteration()}});
  } catch (const IoError& e) {
    return report_error(err, kExitIo, "io", e.what());
  } catch (const std::invalid_argument& e) {
    return report_error(err, kExitConfig, "config", e.what());
  } catch (const std::out_of_range& e) {
    return report_error(err, kExitConfig, "config", e.what());
  }
}

}  // namespace treeinr
