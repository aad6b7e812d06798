#include "soar/cli.hpp"
#include "soar/index.hpp"
#include "soar/io.hpp"

#include <doctest.h>

#include <filesystem>
#include <fstream>
#include <map>
#include <set>
#include <sstream>

namespace fs = std::filesystem;
using soar::cli::run;

namespace {

struct Outcome {
  int code;
  std::string out;
  std::string err;
};

Outcome invoke(const std::vector<std::string>& args) {
  std::ostringstream out, err;
  const int code = run(args, out, err);
  return {code, out.str(), err.str()};
}

fs::path workdir() {
  static const fs::path dir = [] {
    const auto d = fs::temp_directory_path() / "soar_test_cli";
    fs::remove_all(d);
    fs::create_directories(d);
    return d;
  }();
  return dir;
}

std::string at(const std::string& name) { return (workdir() / name).string(); }

std::string slurp(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  std::ostringstream s;
  s << in.rdbuf();
  return s.str();
}

std::vector<std::string> lines_of(const std::string& text, bool skip_comments = true) {
  std::vector<std::string> out;
  std::istringstream in(text);
  for (std::string line; std::getline(in, line);) {
    if (skip_comments && !line.empty() && line[0] == '#') continue;
    out.push_back(line);
  }
  return out;
}

std::vector<std::string> split(const std::string& line) {
  std::vector<std::string> out;
  std::istringstream in(line);
  for (std::string cell; std::getline(in, cell, ',');) out.push_back(cell);
  return out;
}

// Shared small dataset: 4000 points, 200 queries, three indices.
struct Fixture {
  Fixture() {
    REQUIRE(invoke({"synth", "--n", "4000", "--d", "16", "--clusters", "40", "--sigma", "0.3",
                    "--normalize", "--seed", "5", "--out", at("base.fvecs"), "--queries", "200",
                    "--queries-out", at("queries.fvecs")})
                .code == 0);
    for (const std::string policy : {"none", "naive", "soar"}) {
      const auto r = invoke({"build", "--data", at("base.fvecs"), "-c", "20", "--policy", policy,
                             "--seed", "3", "--out", at(policy + ".soar")});
      REQUIRE_MESSAGE(r.code == 0, r.err);
    }
  }
};

const Fixture& fixture() {
  static const Fixture f;
  return f;
}

}  // namespace

TEST_CASE("synth is deterministic and writes queries") {
  const auto a = invoke({"synth", "--n", "500", "--d", "8", "--seed", "1", "--out", at("a.fvecs"),
                         "--queries", "20", "--queries-out", at("aq.fvecs")});
  REQUIRE(a.code == 0);
  const auto b = invoke({"synth", "--n", "500", "--d", "8", "--seed", "1", "--out", at("b.fvecs")});
  REQUIRE(b.code == 0);
  CHECK(slurp(at("a.fvecs")) == slurp(at("b.fvecs")));
  CHECK(soar::read_fvecs(at("a.fvecs")).size() == 500);
  CHECK(soar::read_fvecs(at("aq.fvecs")).size() == 20);
  CHECK(slurp(at("aq.fvecs")) != slurp(at("a.fvecs")).substr(0, 20 * (4 + 8 * 4)));

  const auto c = invoke({"synth", "--n", "50", "--d", "8", "--sigma", "0", "--clusters", "5",
                         "--out", at("c.fvecs")});
  REQUIRE(c.code == 0);
  const auto X = soar::read_fvecs(at("c.fvecs"));
  std::set<std::vector<float>> distinct;
  for (soar::Index i = 0; i < X.size(); ++i) {
    distinct.insert(std::vector<float>(X.row(i).data(), X.row(i).data() + 8));
  }
  CHECK(distinct.size() == 5);
}

TEST_CASE("build defaults and reproducibility") {
  REQUIRE(invoke({"synth", "--n", "2000", "--d", "8", "--seed", "2", "--out", at("d.fvecs")}).code == 0);
  const auto r1 = invoke({"build", "--data", at("d.fvecs"), "--out", at("d1.soar")});
  REQUIRE_MESSAGE(r1.code == 0, r1.err);
  const auto r2 = invoke({"build", "--data", at("d.fvecs"), "--out", at("d2.soar")});
  REQUIRE(r2.code == 0);
  CHECK(slurp(at("d1.soar")) == slurp(at("d2.soar")));
  const auto index = soar::load_index(at("d1.soar"));
  CHECK(index.partitions() == 5);
  CHECK(index.metadata().policy.kind == soar::SpillPolicy::Kind::soar);
  CHECK(index.metadata().policy.lambda() == 1.0f);
  CHECK(r1.out.find("# soar build") != std::string::npos);
  CHECK(r1.out.find("lambda=1") != std::string::npos);
  CHECK(r1.out.find("spill_overhead_matches=true") != std::string::npos);
}

TEST_CASE("exit codes") {
  CHECK(invoke({}).code == 1);
  CHECK(invoke({"nosuch"}).code == 1);
  CHECK(invoke({"build", "--data", at("missing.fvecs"), "--out", at("x.soar")}).code == 2);
  CHECK(invoke({"build", "--data", at("d.fvecs"), "--policy", "sideways", "--out", at("x.soar")})
            .code == 1);
  CHECK(invoke({"build", "--data", at("d.fvecs"), "-c", "1", "--out", at("x.soar")}).code == 1);
  CHECK(invoke({"--help"}).code == 0);

  {
    std::ofstream junk(at("junk.soar"), std::ios::binary);
    junk << "not an index";
  }
  const auto bad = invoke({"search", "--index", at("junk.soar"), "--queries", at("d.fvecs")});
  CHECK(bad.code == 2);
  CHECK(bad.err.find("header") != std::string::npos);

  const auto ok = invoke({"verify", "--samples", "100000", "--instances", "2", "--d", "8",
                          "--lemma-instances", "2"});
  CHECK_MESSAGE(ok.code == 0, ok.err);
  const auto fail = invoke({"verify", "--samples", "100000", "--instances", "2", "--d", "8",
                            "--tolerance", "1e-9", "--lemma-instances", "1"});
  CHECK(fail.code == 3);
}

TEST_CASE("config file values are overridden by explicit flags") {
  {
    std::ofstream cfg(at("synth.cfg"));
    cfg << "# synth settings\nn=300\nd=4\nseed=9\n\nout=" << at("cfg.fvecs") << "\n";
  }
  const auto a = invoke({"synth", "--config", at("synth.cfg")});
  REQUIRE_MESSAGE(a.code == 0, a.err);
  CHECK(soar::read_fvecs(at("cfg.fvecs")).size() == 300);
  const auto b = invoke({"synth", "--config", at("synth.cfg"), "--n", "120"});
  REQUIRE(b.code == 0);
  CHECK(soar::read_fvecs(at("cfg.fvecs")).size() == 120);
  CHECK(b.out.find("n=120") != std::string::npos);
}

TEST_CASE("mismatched query dimensionality is a data error") {
  fixture();
  REQUIRE(invoke({"synth", "--n", "10", "--d", "7", "--out", at("q7.fvecs")}).code == 0);
  const auto r = invoke({"search", "--index", at("soar.soar"), "--queries", at("q7.fvecs")});
  CHECK(r.code == 2);
}

TEST_CASE("search output") {
  fixture();
  const auto r = invoke({"search", "--index", at("naive.soar"), "--queries", at("queries.fvecs"),
                         "--limit", "3", "-k", "5", "--probes", "4"});
  REQUIRE_MESSAGE(r.code == 0, r.err);
  const auto rows = lines_of(r.out);
  REQUIRE(rows.size() == 1 + 3 * 5);
  CHECK(rows[0] == "query,rank,id,score,datapoints_scanned,partitions_scanned");
  CHECK(split(rows[1])[5] == "4");
}

TEST_CASE("bench sweep and datapoints-to-recall") {
  fixture();
  const auto run_bench = [&](const std::string& out) {
    return invoke({"bench", "--index", at("none.soar") + "," + at("naive.soar") + "," + at("soar.soar"),
                   "--queries", at("queries.fvecs"), "--exact", "-k", "10", "--deterministic",
                   "--out", at(out)});
  };
  const auto r = run_bench("bench.csv");
  REQUIRE_MESSAGE(r.code == 0, r.err);
  const auto rows = lines_of(slurp(at("bench.csv")));
  CHECK(rows[0] == "index,policy,lambda,partitions,probes,datapoints_scanned,recall_at_k,latency_us");

  std::map<std::string, std::vector<double>> recall;
  std::map<std::string, double> last_probe_recall;
  for (std::size_t i = 1; i < rows.size(); ++i) {
    const auto cells = split(rows[i]);
    REQUIRE(cells.size() == 8);
    recall[cells[1]].push_back(std::stod(cells[6]));
    if (cells[4] == "20") last_probe_recall[cells[1]] = std::stod(cells[6]);
    CHECK(cells[7] == "0");
  }
  REQUIRE(recall.size() == 3);
  for (const auto& [policy, series] : recall) {
    CHECK(std::is_sorted(series.begin(), series.end()));
    CHECK(last_probe_recall.at(policy) == 1.0);
  }

  const auto kmr = lines_of(slurp(at("bench.kmr.csv")));
  CHECK(kmr[0] == "index,policy,lambda,target_recall,datapoints_to_recall,gain_over_none");
  std::set<std::string> policies;
  for (std::size_t i = 1; i < kmr.size(); ++i) policies.insert(split(kmr[i])[1]);
  CHECK(policies == std::set<std::string>{"none", "naive", "soar"});

  REQUIRE(run_bench("bench2.csv").code == 0);
  CHECK(lines_of(slurp(at("bench.csv"))) == lines_of(slurp(at("bench2.csv"))));
  CHECK(lines_of(slurp(at("bench.kmr.csv"))) == lines_of(slurp(at("bench2.kmr.csv"))));
}

TEST_CASE("diagnose columns and correlation") {
  fixture();
  std::map<std::string, double> pearson;
  for (const std::string policy : {"none", "naive", "soar"}) {
    const auto r = invoke({"diagnose", "--index", at(policy + ".soar"), "--queries",
                           at("queries.fvecs"), "-k", "10", "--out", at("diag_" + policy + ".csv")});
    REQUIRE_MESSAGE(r.code == 0, r.err);
    const auto rows = lines_of(slurp(at("diag_" + policy + ".csv")));
    const auto header = split(rows.at(0));
    CHECK(rows.size() == 1 + 200 * 10);
    if (policy == "none") {
      CHECK(header.size() == 6);
      CHECK(std::find(header.begin(), header.end(), "cos_spilled") == header.end());
      continue;
    }
    CHECK(header.size() == 9);
    for (const auto& line : lines_of(slurp(at("diag_" + policy + ".summary.csv")))) {
      const auto cells = split(line);
      if (cells.size() == 2 && cells[0] == "pearson_cos") pearson[policy] = std::stod(cells[1]);
    }
  }
  REQUIRE(pearson.size() == 2);
  CHECK(pearson["soar"] < pearson["naive"]);
}
