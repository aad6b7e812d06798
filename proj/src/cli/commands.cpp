#include "soar/cli.hpp"

#include "soar/eval.hpp"
#include "soar/index.hpp"
#include "soar/io.hpp"
#include "soar/pq.hpp"
#include "soar/synth.hpp"
#include "soar/vq.hpp"

#include <CLI11.hpp>

#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <functional>
#include <map>
#include <memory>
#include <optional>
#include <ostream>
#include <sstream>

namespace soar::cli {

namespace {

/// Problems with the input data rather than the invocation (exit code 2).
class DataError : public Error {
 public:
  using Error::Error;
};

class VerificationFailed : public Error {
 public:
  using Error::Error;
};

using Clock = std::chrono::steady_clock;

double seconds_since(Clock::time_point start) {
  return std::chrono::duration<double>(Clock::now() - start).count();
}

std::string to_text(const std::string& v) { return v; }
std::string to_text(bool v) { return v ? "true" : "false"; }
std::string to_text(float v) { return format_number(v); }
std::string to_text(double v) { return format_number(v); }
template <typename T>
  requires std::is_integral_v<T>
std::string to_text(T v) {
  return std::to_string(v);
}
template <typename T>
std::string to_text(const std::optional<T>& v) {
  return v ? to_text(*v) : std::string();
}
template <typename T>
std::string to_text(const std::vector<T>& values) {
  std::string out;
  for (std::size_t i = 0; i < values.size(); ++i) {
    if (i) out += ',';
    out += to_text(values[i]);
  }
  return out;
}

class ConfigBuilder {
 public:
  explicit ConfigBuilder(std::string command) { config_.command = std::move(command); }

  template <typename T>
  ConfigBuilder& add(const std::string& key, const T& value) {
    config_.entries.emplace_back(key, to_text(value));
    return *this;
  }
  const RunConfig& get() const { return config_; }

 private:
  RunConfig config_;
};

std::vector<std::string> split(const std::string& text, char sep) {
  std::vector<std::string> out;
  std::string item;
  std::istringstream in(text);
  while (std::getline(in, item, sep)) {
    const auto b = item.find_first_not_of(" \t");
    const auto e = item.find_last_not_of(" \t");
    if (b != std::string::npos) out.push_back(item.substr(b, e - b + 1));
  }
  return out;
}

template <typename T>
std::vector<T> parse_list(const std::string& text, const char* option) {
  std::vector<T> out;
  for (const auto& item : split(text, ',')) {
    T value{};
    if (!CLI::detail::lexical_conversion<T, T>({item}, value)) {
      throw InvalidArgument(std::string(option) + ": cannot parse '" + item + "'");
    }
    out.push_back(value);
  }
  if (out.empty()) throw InvalidArgument(std::string(option) + ": empty list");
  return out;
}

std::size_t count_from(double value, const char* option) {
  if (!(value >= 1.0) || value != std::floor(value) || value > 1e15) {
    throw InvalidArgument(std::string(option) + " must be a positive integer");
  }
  return static_cast<std::size_t>(value);
}

std::ofstream open_output(const std::string& path) {
  std::ofstream out(path, std::ios::trunc);
  if (!out) throw Error("cannot open " + path + " for writing");
  return out;
}

Dataset load_dataset(const std::string& path, std::optional<std::size_t> limit = {}) {
  return read_fvecs(path, limit);
}

void check_dims(const Dataset& queries, const SoarIndex& index, const std::string& index_path) {
  if (queries.dims() != index.dims()) {
    throw DataError("queries have d=" + std::to_string(queries.dims()) + " but " + index_path +
                    " has d=" + std::to_string(index.dims()));
  }
}

std::string hex(std::uint64_t v) {
  char buf[17];
  std::snprintf(buf, sizeof buf, "%016llx", static_cast<unsigned long long>(v));
  return buf;
}

GroundTruth truth_from_ivecs(const std::string& path, std::size_t queries, std::size_t k,
                             Index n) {
  const auto rows = read_ivecs(path);
  if (rows.size() < queries) {
    throw DataError(path + ": " + std::to_string(rows.size()) + " ground-truth rows for " +
                    std::to_string(queries) + " queries");
  }
  GroundTruth out(queries);
  for (std::size_t i = 0; i < queries; ++i) {
    if (rows[i].size() < k) throw DataError(path + ": ground-truth rows shorter than k");
    for (std::size_t j = 0; j < k; ++j) {
      const auto id = rows[i][j];
      if (id < 0 || id >= n) throw DataError(path + ": neighbor id out of range");
      out[i].push_back(Neighbor{static_cast<DatapointId>(id), 0.0f});
    }
  }
  return out;
}

// Exact top-k, cached beside the query file under a name keyed by the
// dataset and query hashes plus k.
GroundTruth exact_truth(const std::string& queries_path, const Dataset& queries, const Dataset& X,
                        std::size_t k, std::ostream& err) {
  const std::string cache = queries_path + "." + hex(dataset_fingerprint(X) ^
                                                     (dataset_fingerprint(queries) * 31)) +
                            ".k" + std::to_string(k) + ".gt.ivecs";
  if (std::filesystem::exists(cache)) {
    try {
      return truth_from_ivecs(cache, static_cast<std::size_t>(queries.size()), k, X.size());
    } catch (const Error& e) {
      err << "ignoring unreadable ground-truth cache " << cache << ": " << e.what() << "\n";
    }
  }
  GroundTruth truth = ground_truth(queries, X, k);
  std::vector<std::vector<std::int32_t>> rows(truth.size());
  for (std::size_t i = 0; i < truth.size(); ++i) {
    for (const auto& nb : truth[i]) rows[i].push_back(static_cast<std::int32_t>(nb.id));
  }
  try {
    write_ivecs(cache, rows);
  } catch (const Error& e) {
    err << "could not write ground-truth cache " << cache << ": " << e.what() << "\n";
  }
  return truth;
}

// Expands "--config FILE" into "--key=value" tokens placed right after the
// subcommand, so explicit flags that follow still take precedence.
std::vector<std::string> expand_config(const std::vector<std::string>& args) {
  std::vector<std::string> out;
  std::vector<std::string> from_file;
  for (std::size_t i = 0; i < args.size(); ++i) {
    std::string path;
    if (args[i] == "--config") {
      if (i + 1 >= args.size()) throw CLI::ArgumentMismatch("--config requires a file argument");
      path = args[++i];
    } else if (args[i].rfind("--config=", 0) == 0) {
      path = args[i].substr(9);
    } else {
      out.push_back(args[i]);
      continue;
    }
    for (const auto& [key, value] : RunConfig::parse_file(path)) {
      from_file.push_back("--" + key + "=" + value);
    }
  }
  if (from_file.empty()) return out;
  const auto sub = std::find_if(out.begin(), out.end(),
                                [](const std::string& a) { return !a.empty() && a[0] != '-'; });
  const auto at = sub == out.end() ? out.end() : sub + 1;
  out.insert(at, from_file.begin(), from_file.end());
  return out;
}

// --- synth ---------------------------------------------------------------

struct SynthOptions {
  double n = 0;
  Index dims = 0;
  Index clusters = 10;
  float sigma = 0.1f;
  std::uint64_t seed = 0;
  std::string out;
  double queries = 0;
  std::string queries_out;
  bool normalize = false;
};

int cmd_synth(const SynthOptions& o, std::ostream& out) {
  const std::size_t n = count_from(o.n, "--n");
  require(o.dims >= 1, "--d must be >= 1");
  require(o.clusters >= 1, "--clusters must be >= 1");
  require(std::isfinite(o.sigma) && o.sigma >= 0.0f, "--sigma must be >= 0");
  require(o.queries == 0 || !o.queries_out.empty(), "--queries needs --queries-out");
  const MixtureSpec spec{o.dims, o.clusters, o.sigma, o.seed, o.normalize};

  ConfigBuilder cfg("synth");
  cfg.add("n", n).add("d", o.dims).add("clusters", o.clusters).add("sigma", o.sigma);
  cfg.add("normalize", o.normalize).add("seed", o.seed).add("out", o.out);
  if (o.queries > 0) cfg.add("queries", count_from(o.queries, "--queries")).add("queries-out", o.queries_out);
  out << cfg.get().header();

  write_fvecs(o.out, sample_mixture(spec, static_cast<Index>(n), 0));
  out << "wrote " << n << " vectors (d=" << o.dims << ") to " << o.out << "\n";
  if (o.queries > 0) {
    const std::size_t q = count_from(o.queries, "--queries");
    write_fvecs(o.queries_out, sample_mixture(spec, static_cast<Index>(q), 1));
    out << "wrote " << q << " queries to " << o.queries_out << "\n";
  }
  return kSuccess;
}

// --- build ---------------------------------------------------------------

struct BuildCmdOptions {
  std::string data;
  std::optional<Index> partitions;
  std::string policy = "soar";
  std::optional<float> lambda;
  Index subspace_dims = 2;
  std::uint64_t seed = 0;
  int kmeans_iters = kDefaultKMeansIters;
  int pq_iters = 25;
  std::optional<std::size_t> limit;
  std::string out;
  std::string report;
};

int cmd_build(const BuildCmdOptions& o, std::ostream& out) {
  if (o.lambda && o.policy != "soar") throw InvalidArgument("--lambda only applies to --policy soar");
  const SpillPolicy policy = SpillPolicy::parse(o.policy, o.lambda.value_or(kDefaultLambda));
  const Dataset X = load_dataset(o.data, o.limit);
  const Index n = X.size();
  const Index partitions =
      o.partitions.value_or(std::max<Index>(policy.spills() ? 2 : 1, n / kPointsPerPartition));
  require(partitions >= 1 && partitions <= n, "--partitions must be in [1, n]");

  ConfigBuilder cfg("build");
  cfg.add("data", o.data).add("limit", o.limit).add("partitions", partitions);
  cfg.add("policy", policy.name());
  if (policy.kind == SpillPolicy::Kind::soar) cfg.add("lambda", policy.lambda());
  cfg.add("subspace-dims", o.subspace_dims).add("seed", o.seed);
  cfg.add("kmeans-iters", o.kmeans_iters).add("pq-iters", o.pq_iters).add("out", o.out);

  auto start = Clock::now();
  const Codebook codebook = train_kmeans(X, partitions, o.kmeans_iters, o.seed);
  const double kmeans_s = seconds_since(start);
  start = Clock::now();
  const AssignmentTable primary = assign_primary(X, codebook);
  const double assign_s = seconds_since(start);
  start = Clock::now();
  const SoarIndex index =
      build_from_partitioning(X, codebook, primary, policy, o.subspace_dims, o.seed, o.pq_iters);
  const double encode_s = seconds_since(start);
  start = Clock::now();
  save_index(index, o.out);
  const double write_s = seconds_since(start);

  const auto n_points = static_cast<std::size_t>(n);
  const MemoryAccounting mem =
      memory_accounting(n_points, X.dims(), o.subspace_dims, Precision::float32, policy.spills());
  const std::size_t file_bytes = std::filesystem::file_size(o.out);
  const std::size_t unspilled_bytes =
      serialized_size(n_points, X.dims(), partitions, o.subspace_dims, n_points);
  const std::size_t spill_delta = file_bytes - unspilled_bytes;

  std::ostringstream report;
  report << cfg.get().header();
  auto line = [&](const char* key, const auto& value) { report << key << "=" << to_text(value) << "\n"; };
  line("n", n_points);
  line("d", X.dims());
  line("partitions", partitions);
  line("policy", policy.name());
  line("total_postings", index.total_postings());
  line("kmeans_seconds", kmeans_s);
  line("assign_seconds", assign_s);
  line("spill_and_encode_seconds", encode_s);
  line("write_seconds", write_s);
  line("pq_subspaces", mem.subspaces);
  line("pq_padded_dims", mem.padded_dims);
  line("bytes_per_posting", mem.per_point_pq);
  line("bytes_per_posting_formula", mem.per_point_pq_formula);
  line("bytes_per_point_full", mem.per_point_full);
  line("spill_overhead_bytes_predicted", mem.soar_overhead_bytes);
  line("spill_overhead_bytes_actual", spill_delta);
  line("spill_overhead_matches", spill_delta == mem.soar_overhead_bytes);
  line("relative_increase", mem.relative_increase);
  line("growth_over_unspilled", mem.growth_over_unspilled);
  line("approx_relative_increase", mem.approx_relative_increase);
  line("file_bytes", file_bytes);
  out << report.str();
  if (!o.report.empty()) open_output(o.report) << report.str();
  return kSuccess;
}

// --- search --------------------------------------------------------------

struct SearchCmdOptions {
  std::string index;
  std::string queries;
  std::size_t k = 10;
  std::size_t probes = 1;
  std::optional<std::size_t> rerank;
  std::optional<std::size_t> budget;
  std::optional<std::size_t> limit;
  std::string out;
};

int cmd_search(const SearchCmdOptions& o, std::ostream& out) {
  const SoarIndex index = load_index(o.index);
  const Dataset queries = load_dataset(o.queries, o.limit);
  check_dims(queries, index, o.index);
  SearchParams params{o.k, o.probes, o.rerank, o.budget};

  ConfigBuilder cfg("search");
  cfg.add("index", o.index).add("queries", o.queries).add("limit", o.limit).add("k", o.k);
  cfg.add("probes", o.probes).add("rerank", o.rerank).add("budget", o.budget);
  cfg.add("policy", index.metadata().policy.name()).add("seed", index.metadata().seed);

  std::ofstream file;
  if (!o.out.empty()) file = open_output(o.out);
  std::ostream& sink = o.out.empty() ? out : file;
  sink << cfg.get().header();
  CsvWriter csv(sink, {"query", "rank", "id", "score", "datapoints_scanned", "partitions_scanned"});
  for (Index qi = 0; qi < queries.size(); ++qi) {
    const SearchResult res = search(index, queries.row(qi), params);
    for (std::size_t r = 0; r < res.neighbors.size(); ++r) {
      csv.row({to_text(qi), to_text(r + 1), to_text(res.neighbors[r].id),
               to_text(res.neighbors[r].score), to_text(res.datapoints_scanned),
               to_text(res.partitions_scanned)});
    }
  }
  return kSuccess;
}

// --- bench ---------------------------------------------------------------

struct BenchOptions {
  std::string indices;
  std::string queries;
  std::string truth;
  bool exact = false;
  std::size_t k = 10;
  std::string probes;
  std::optional<std::size_t> rerank;
  std::string targets = "0.8,0.85,0.9,0.95";
  std::optional<std::size_t> limit;
  bool deterministic = false;
  std::string out;
  std::string kmr_out;
};

std::vector<std::size_t> default_probes(std::size_t c) {
  std::vector<std::size_t> out;
  for (std::size_t p = 1; p < c; p *= 2) out.push_back(p);
  out.push_back(c);
  return out;
}

int cmd_bench(const BenchOptions& o, std::ostream& out, std::ostream& err) {
  if (o.truth.empty() == !o.exact) {
    throw InvalidArgument("bench needs exactly one of --truth FILE or --exact");
  }
  const auto index_paths = split(o.indices, ',');
  require(!index_paths.empty(), "--index: no index files given");
  const auto targets = parse_list<double>(o.targets, "--targets");
  for (double t : targets) require(t > 0.0 && t <= 1.0, "--targets must lie in (0, 1]");
  std::optional<std::vector<std::size_t>> probes_sweep;
  if (!o.probes.empty()) probes_sweep = parse_list<std::size_t>(o.probes, "--probes");

  const Dataset queries = load_dataset(o.queries, o.limit);
  std::vector<SoarIndex> indices;
  for (const auto& path : index_paths) {
    indices.push_back(load_index(path));
    check_dims(queries, indices.back(), path);
    require(o.k <= static_cast<std::size_t>(indices.back().size()), "-k exceeds the index size");
  }

  ConfigBuilder cfg("bench");
  cfg.add("index", o.indices).add("queries", o.queries).add("limit", o.limit);
  cfg.add("truth", o.truth).add("exact", o.exact).add("k", o.k).add("probes", o.probes);
  cfg.add("rerank", o.rerank ? to_text(*o.rerank) : std::string("all"));
  cfg.add("targets", targets).add("deterministic", o.deterministic).add("out", o.out);
  for (std::size_t i = 0; i < indices.size(); ++i) {
    cfg.add("seed." + std::to_string(i), indices[i].metadata().seed);
  }

  std::map<std::uint64_t, GroundTruth> truths;
  auto truth_for = [&](const SoarIndex& index) -> const GroundTruth& {
    const auto key = dataset_fingerprint(index.full_store());
    auto it = truths.find(key);
    if (it != truths.end()) return it->second;
    GroundTruth truth = o.exact ? exact_truth(o.queries, queries, index.full_store(), o.k, err)
                                : truth_from_ivecs(o.truth, static_cast<std::size_t>(queries.size()),
                                                   o.k, index.size());
    return truths.emplace(key, std::move(truth)).first->second;
  };

  std::ofstream file = open_output(o.out);
  file << cfg.get().header();
  CsvWriter csv(file, {"index", "policy", "lambda", "partitions", "probes", "datapoints_scanned",
                       "recall_at_k", "latency_us"});
  std::vector<KmrCurve> curves;
  for (std::size_t i = 0; i < indices.size(); ++i) {
    const SoarIndex& index = indices[i];
    const GroundTruth& truth = truth_for(index);
    const auto c = static_cast<std::size_t>(index.partitions());
    const auto policy = index.metadata().policy;
    for (std::size_t probes : probes_sweep.value_or(default_probes(c))) {
      require(probes >= 1 && probes <= c, "--probes values must lie in [1, c]");
      SearchParams params{o.k, probes, o.rerank.value_or(static_cast<std::size_t>(index.size())), {}};
      double recall = 0.0, scanned = 0.0, seconds = 0.0;
      for (Index qi = 0; qi < queries.size(); ++qi) {
        const auto start = Clock::now();
        const SearchResult res = search(index, queries.row(qi), params);
        seconds += seconds_since(start);
        scanned += double(res.datapoints_scanned);
        recall += recall_at_k(res.neighbors, truth[static_cast<std::size_t>(qi)], o.k);
      }
      const double nq = double(queries.size());
      csv.row({index_paths[i], policy.name(), to_text(policy.lambda()), to_text(c), to_text(probes),
               to_text(scanned / nq), to_text(recall / nq),
               o.deterministic ? std::string("0") : to_text(1e6 * seconds / nq)});
    }
    curves.push_back(kmr_curve(queries, index, truth, o.k));
  }

  const std::string kmr_path =
      o.kmr_out.empty() ? std::filesystem::path(o.out).replace_extension(".kmr.csv").string()
                        : o.kmr_out;
  std::ofstream kmr_file = open_output(kmr_path);
  kmr_file << cfg.get().header();
  CsvWriter kmr(kmr_file, {"index", "policy", "lambda", "target_recall", "datapoints_to_recall",
                           "gain_over_none"});
  const auto baseline = std::find_if(indices.begin(), indices.end(), [](const SoarIndex& idx) {
    return !idx.metadata().policy.spills();
  });
  out << cfg.get().header();
  for (double target : targets) {
    std::optional<double> base;
    if (baseline != indices.end()) {
      base = datapoints_to_recall(curves[static_cast<std::size_t>(baseline - indices.begin())], target);
    }
    for (std::size_t i = 0; i < indices.size(); ++i) {
      const auto policy = indices[i].metadata().policy;
      const double dp = datapoints_to_recall(curves[i], target);
      const std::string gain = base ? to_text(*base / dp) : std::string();
      kmr.row({index_paths[i], policy.name(), to_text(policy.lambda()), to_text(target),
               to_text(dp), gain});
      out << "target=" << to_text(target) << " " << policy.name() << " datapoints=" << to_text(dp);
      if (base) out << " gain=" << gain;
      out << "\n";
    }
  }
  out << "wrote " << o.out << " and " << kmr_path << "\n";
  return kSuccess;
}

// --- diagnose ------------------------------------------------------------

struct DiagnoseOptions {
  std::string index;
  std::string queries;
  std::string truth;
  std::size_t k = 100;
  std::optional<std::size_t> limit;
  std::string out;
  std::string summary_out;
  std::string bins_out;
};

int cmd_diagnose(const DiagnoseOptions& o, std::ostream& out, std::ostream& err) {
  const SoarIndex index = load_index(o.index);
  const Dataset queries = load_dataset(o.queries, o.limit);
  check_dims(queries, index, o.index);
  require(o.k >= 1 && o.k <= static_cast<std::size_t>(index.size()), "-k must be in [1, n]");
  const GroundTruth truth =
      o.truth.empty() ? exact_truth(o.queries, queries, index.full_store(), o.k, err)
                      : truth_from_ivecs(o.truth, static_cast<std::size_t>(queries.size()), o.k,
                                         index.size());
  const Diagnostics diag = diagnostics(queries, index, truth, o.k);
  const bool spill = diag.summary.has_spill;
  if (!spill) err << "index has no spilled assignment; spilled columns omitted\n";

  const auto derived = [&](const std::string& given, const char* ext) {
    return given.empty() ? std::filesystem::path(o.out).replace_extension(ext).string() : given;
  };
  const std::string summary_path = derived(o.summary_out, ".summary.csv");
  const std::string bins_path = derived(o.bins_out, ".bins.csv");

  ConfigBuilder cfg("diagnose");
  cfg.add("index", o.index).add("queries", o.queries).add("limit", o.limit).add("truth", o.truth);
  cfg.add("k", o.k).add("policy", index.metadata().policy.name());
  if (index.metadata().policy.kind == SpillPolicy::Kind::soar) {
    cfg.add("lambda", index.metadata().policy.lambda());
  }
  cfg.add("seed", index.metadata().seed).add("out", o.out);
  const std::string header = cfg.get().header();

  {
    std::ofstream file = open_output(o.out);
    file << header;
    std::vector<std::string> cols{"query", "neighbor", "cos_primary", "score_err_primary",
                                  "rank_primary", "residual_norm"};
    if (spill) cols.insert(cols.end(), {"cos_spilled", "score_err_spilled", "rank_spilled"});
    CsvWriter csv(file, cols);
    for (const auto& rec : diag.records) {
      std::vector<std::string> row{to_text(rec.query), to_text(rec.neighbor),
                                   to_text(rec.cos_primary), to_text(rec.score_err_primary),
                                   to_text(rec.rank_primary), to_text(rec.residual_norm)};
      if (spill) {
        row.insert(row.end(), {to_text(*rec.cos_spilled), to_text(*rec.score_err_spilled),
                               to_text(*rec.rank_spilled)});
      }
      csv.row(row);
    }
  }
  {
    std::ofstream file = open_output(summary_path);
    file << header;
    CsvWriter csv(file, {"metric", "value"});
    csv.row({"records", to_text(diag.summary.records)});
    csv.row({"has_spill", to_text(spill)});
    if (spill) {
      csv.row({"pearson_cos", to_text(diag.summary.pearson_cos)});
      csv.row({"pearson_score_err", to_text(diag.summary.pearson_score_err)});
    }
  }
  {
    std::ofstream file = open_output(bins_path);
    file << header;
    std::vector<std::string> cols{"rank_primary", "count", "mean_score_err_primary"};
    if (spill) cols.push_back("mean_rank_spilled");
    CsvWriter csv(file, cols);
    for (const auto& bin : diag.summary.by_rank_primary) {
      if (bin.count == 0) continue;
      std::vector<std::string> row{to_text(bin.rank), to_text(bin.count),
                                   to_text(bin.mean_score_err_primary)};
      if (spill) row.push_back(to_text(bin.mean_rank_spilled));
      csv.row(row);
    }
  }

  out << header;
  out << "records=" << diag.summary.records << "\n";
  if (spill) {
    out << "pearson_cos=" << to_text(diag.summary.pearson_cos) << "\n";
    out << "pearson_score_err=" << to_text(diag.summary.pearson_score_err) << "\n";
  }
  out << "wrote " << o.out << ", " << summary_path << " and " << bins_path << "\n";
  return kSuccess;
}

// --- verify --------------------------------------------------------------

struct VerifyOptions {
  std::string lambdas = "0,1,2";
  Index dims = 32;
  double samples = 1e6;
  std::size_t instances = 10;
  std::size_t candidates = 2;
  double tolerance = 0.02;
  Index lemma_dims = 64;
  std::size_t lemma_instances = 10;
  double lemma_tolerance = 0.005;
  std::uint64_t seed = 0;
  std::string out;
};

int cmd_verify(const VerifyOptions& o, std::ostream& out) {
  const auto lambdas = parse_list<double>(o.lambdas, "--lambdas");
  const std::size_t samples = count_from(o.samples, "--samples");
  require(o.candidates >= 2, "--candidates must be >= 2");
  require(o.tolerance > 0.0 && o.lemma_tolerance > 0.0, "tolerances must be positive");

  ConfigBuilder cfg("verify");
  cfg.add("lambdas", lambdas).add("d", o.dims).add("samples", samples);
  cfg.add("instances", o.instances).add("candidates", o.candidates).add("tolerance", o.tolerance);
  cfg.add("lemma-d", o.lemma_dims).add("lemma-instances", o.lemma_instances);
  cfg.add("lemma-tolerance", o.lemma_tolerance).add("seed", o.seed).add("out", o.out);

  std::ostringstream body;
  CsvWriter csv(body, {"check", "instance", "lambda", "candidate", "empirical", "closed_form",
                       "error", "tolerance", "pass"});
  bool all_pass = true;
  out << cfg.get().header();
  for (std::size_t i = 0; i < o.instances; ++i) {
    const LossInstance inst = random_loss_instance(o.dims, o.candidates, o.seed + i);
    const auto reports = mc_verify_theorem1(inst.r, inst.r_primes, lambdas, samples,
                                            o.seed + 0x9e3779b97f4a7c15ull * (i + 1));
    for (const auto& rep : reports) {
      const bool pass = rep.max_relative_error <= o.tolerance;
      all_pass = all_pass && pass;
      out << "theorem1 instance=" << i << " lambda=" << to_text(rep.lambda)
          << " max_rel_err=" << to_text(rep.max_relative_error) << (pass ? " PASS" : " FAIL")
          << "\n";
      for (std::size_t j = 1; j < rep.candidates.size(); ++j) {
        const auto& cand = rep.candidates[j];
        csv.row({"theorem1", to_text(i), to_text(rep.lambda), to_text(j),
                 to_text(cand.empirical_ratio), to_text(cand.closed_form_ratio),
                 to_text(cand.relative_error), to_text(o.tolerance),
                 to_text(cand.relative_error <= o.tolerance)});
      }
    }
  }
  for (std::size_t i = 0; i < o.lemma_instances; ++i) {
    const LossInstance inst = random_loss_instance(o.lemma_dims, 1, o.seed + 1000003 + i);
    const LemmaReport rep = mc_verify_lemma(inst.r, inst.r_primes.front(), samples,
                                            o.seed + 0x7f4a7c159e3779b9ull * (i + 1));
    const bool pass = rep.abs_error < o.lemma_tolerance;
    all_pass = all_pass && pass;
    out << "lemma instance=" << i << " rho=" << to_text(rep.closed_form)
        << " abs_err=" << to_text(rep.abs_error) << (pass ? " PASS" : " FAIL") << "\n";
    csv.row({"lemma", to_text(i), "", "", to_text(rep.empirical), to_text(rep.closed_form),
             to_text(rep.abs_error), to_text(o.lemma_tolerance), to_text(pass)});
  }
  if (!o.out.empty()) open_output(o.out) << cfg.get().header() << body.str();
  out << (all_pass ? "PASS" : "FAIL") << "\n";
  if (!all_pass) throw VerificationFailed("Monte-Carlo check exceeded its tolerance");
  return kSuccess;
}

}  // namespace

std::string RunConfig::header() const {
  std::string out = "# soar " + command + "\n";
  for (const auto& [key, value] : entries) out += "# " + key + "=" + value + "\n";
  return out;
}

std::vector<std::pair<std::string, std::string>> RunConfig::parse_file(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw CLI::FileError::Missing(path);
  std::vector<std::pair<std::string, std::string>> out;
  std::string line;
  int lineno = 0;
  while (std::getline(in, line)) {
    ++lineno;
    const auto b = line.find_first_not_of(" \t\r");
    if (b == std::string::npos || line[b] == '#' || line[b] == ';') continue;
    const auto eq = line.find('=', b);
    if (eq == std::string::npos) {
      throw CLI::ConversionError(path + ":" + std::to_string(lineno) + ": expected key=value");
    }
    auto trim = [](std::string s) {
      const auto first = s.find_first_not_of(" \t\r");
      if (first == std::string::npos) return std::string();
      return s.substr(first, s.find_last_not_of(" \t\r") - first + 1);
    };
    out.emplace_back(trim(line.substr(b, eq - b)), trim(line.substr(eq + 1)));
  }
  return out;
}

int run(const std::vector<std::string>& args, std::ostream& out, std::ostream& err) {
  CLI::App app{"Inverted-file MIPS index with spilled assignment", "soar"};
  app.require_subcommand(1);
  app.option_defaults()->always_capture_default()->multi_option_policy(
      CLI::MultiOptionPolicy::TakeLast);
  const std::string config_help = "Read key=value defaults from FILE (flags override)";
  std::function<int()> action;

  SynthOptions synth;
  auto* s = app.add_subcommand("synth", "Write a Gaussian-mixture dataset as fvecs");
  s->add_option("--n", synth.n, "Number of vectors")->required();
  s->add_option("-d,--d", synth.dims, "Dimensionality")->required();
  s->add_option("--clusters", synth.clusters, "Mixture components");
  s->add_option("--sigma", synth.sigma, "Per-coordinate noise standard deviation");
  s->add_flag("--normalize", synth.normalize, "Scale every vector to unit norm");
  s->add_option("--seed", synth.seed);
  s->add_option("-o,--out", synth.out, "Output fvecs path")->required();
  s->add_option("--queries", synth.queries, "Also draw this many held-out queries");
  s->add_option("--queries-out", synth.queries_out, "Query fvecs path");
  s->add_option("--config", config_help);
  s->callback([&] { action = [&] { return cmd_synth(synth, out); }; });

  BuildCmdOptions bopt;
  auto* b = app.add_subcommand("build", "Train and write a .soar index");
  b->add_option("--data", bopt.data, "Dataset fvecs")->required();
  b->add_option("-c,--partitions", bopt.partitions, "Partitions (default n/400)");
  b->add_option("--policy", bopt.policy, "none, naive or soar")
      ->check(CLI::IsMember({"none", "naive", "soar"}));
  b->add_option("--lambda", bopt.lambda, "Spill loss weight (soar only, default 1)")
      ->check(CLI::NonNegativeNumber);
  b->add_option("-s,--subspace-dims", bopt.subspace_dims, "PQ dimensions per subspace")
      ->check(CLI::PositiveNumber);
  b->add_option("--seed", bopt.seed);
  b->add_option("--kmeans-iters", bopt.kmeans_iters)->check(CLI::PositiveNumber);
  b->add_option("--pq-iters", bopt.pq_iters)->check(CLI::PositiveNumber);
  b->add_option("--limit", bopt.limit, "Use only the first N vectors");
  b->add_option("-o,--out", bopt.out, "Output .soar path")->required();
  b->add_option("--report", bopt.report, "Also write the build report here");
  b->add_option("--config", config_help);
  b->callback([&] { action = [&] { return cmd_build(bopt, out); }; });

  SearchCmdOptions sopt;
  auto* q = app.add_subcommand("search", "Query an index, one CSV row per result");
  q->add_option("--index", sopt.index)->required();
  q->add_option("--queries", sopt.queries, "Query fvecs")->required();
  q->add_option("-k,--k", sopt.k)->check(CLI::PositiveNumber);
  q->add_option("--probes", sopt.probes)->check(CLI::PositiveNumber);
  q->add_option("--rerank", sopt.rerank, "Candidates rescored exactly (default max(10k, 100))");
  q->add_option("--budget", sopt.budget, "Scan partitions until this many postings");
  q->add_option("--limit", sopt.limit, "Use only the first N queries");
  q->add_option("-o,--out", sopt.out, "CSV path (default stdout)");
  q->add_option("--config", config_help);
  q->callback([&] { action = [&] { return cmd_search(sopt, out); }; });

  BenchOptions bench;
  auto* be = app.add_subcommand("bench", "Recall and cost sweep over probes for one or more indices");
  be->add_option("--index", bench.indices, "Comma-separated .soar files")->required();
  be->add_option("--queries", bench.queries)->required();
  be->add_option("--truth", bench.truth, "Ground-truth ivecs");
  be->add_flag("--exact", bench.exact, "Compute ground truth by brute force (cached)");
  be->add_option("-k,--k", bench.k)->check(CLI::PositiveNumber);
  be->add_option("--probes", bench.probes, "Comma-separated sweep (default 1,2,4,...,c)");
  be->add_option("--rerank", bench.rerank, "Candidates rescored exactly (default all)");
  be->add_option("--targets", bench.targets, "Recall targets for datapoints_to_recall");
  be->add_option("--limit", bench.limit, "Use only the first N queries");
  be->add_flag("--deterministic", bench.deterministic, "Write 0 for latency");
  be->add_option("-o,--out", bench.out, "Sweep CSV path")->required();
  be->add_option("--kmr-out", bench.kmr_out, "datapoints_to_recall CSV (default <out>.kmr.csv)");
  be->add_option("--config", config_help);
  be->callback([&] { action = [&] { return cmd_bench(bench, out, err); }; });

  DiagnoseOptions diag;
  auto* dg = app.add_subcommand("diagnose", "Per-neighbor residual angles and score errors");
  dg->add_option("--index", diag.index)->required();
  dg->add_option("--queries", diag.queries)->required();
  dg->add_option("--truth", diag.truth, "Ground-truth ivecs (default: brute force, cached)");
  dg->add_option("-k,--k", diag.k)->check(CLI::PositiveNumber);
  dg->add_option("--limit", diag.limit, "Use only the first N queries");
  dg->add_option("-o,--out", diag.out, "Records CSV path")->required();
  dg->add_option("--summary-out", diag.summary_out, "Default <out>.summary.csv");
  dg->add_option("--bins-out", diag.bins_out, "Default <out>.bins.csv");
  dg->add_option("--config", config_help);
  dg->callback([&] { action = [&] { return cmd_diagnose(diag, out, err); }; });

  VerifyOptions ver;
  auto* v = app.add_subcommand("verify", "Monte-Carlo check of the spill loss and correlation formula");
  v->add_option("--lambdas", ver.lambdas, "Comma-separated lambda values");
  v->add_option("-d,--d", ver.dims)->check(CLI::Range(2, 1 << 16));
  v->add_option("--samples", ver.samples, "Sphere samples per instance");
  v->add_option("--instances", ver.instances);
  v->add_option("--candidates", ver.candidates, "Spill candidates per instance");
  v->add_option("--tolerance", ver.tolerance, "Relative tolerance on loss ratios");
  v->add_option("--lemma-d", ver.lemma_dims)->check(CLI::Range(2, 1 << 16));
  v->add_option("--lemma-instances", ver.lemma_instances);
  v->add_option("--lemma-tolerance", ver.lemma_tolerance, "Absolute tolerance on rho");
  v->add_option("--seed", ver.seed);
  v->add_option("-o,--out", ver.out, "CSV path");
  v->add_option("--config", config_help);
  v->callback([&] { action = [&] { return cmd_verify(ver, out); }; });

  try {
    std::vector<std::string> reversed = expand_config(args);
    std::reverse(reversed.begin(), reversed.end());
    app.parse(reversed);
  } catch (const CLI::CallForHelp&) {
    out << app.help();
    return kSuccess;
  } catch (const CLI::CallForAllHelp&) {
    out << app.help("", CLI::AppFormatMode::All);
    return kSuccess;
  } catch (const CLI::ParseError& e) {
    err << "error: " << e.what() << "\n";
    return kUsageError;
  }

  try {
    return action();
  } catch (const VerificationFailed& e) {
    err << "verification failed: " << e.what() << "\n";
    return kVerificationFailed;
  } catch (const InvalidArgument& e) {
    err << "error: " << e.what() << "\n";
    return kUsageError;
  } catch (const std::exception& e) {
    err << "error: " << e.what() << "\n";
    return kDataError;
  }
}

}  // namespace soar::cli
