// Drives the facetcoh binary end to end through a shell.

#include "facetcoh/annotation.hpp"
#include "facetcoh/coherency.hpp"

#include "synthetic.hpp"

#include <doctest.h>
#include <httplib.h>
#include <json.hpp>

#include <sys/wait.h>
#include <unistd.h>

#include <csignal>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <sstream>

namespace fsys = std::filesystem;
using nlohmann::json;

namespace {

const std::string kCli = FACETCOH_CLI;
const fsys::path kData = FACETCOH_TEST_DATA;

struct Result {
  int status = -1;
  std::string output;  // stdout and stderr
};

Result run(const std::string& args) {
  Result r;
  const std::string cmd = "'" + kCli + "' " + args + " 2>&1";
  FILE* pipe = ::popen(cmd.c_str(), "r");
  REQUIRE(pipe != nullptr);
  char buf[4096];
  while (const std::size_t n = std::fread(buf, 1, sizeof buf, pipe)) r.output.append(buf, n);
  const int raw = ::pclose(pipe);
  r.status = WIFEXITED(raw) ? WEXITSTATUS(raw) : -1;
  return r;
}

std::string slurp(const fsys::path& p) {
  std::ifstream in(p, std::ios::binary);
  std::stringstream s;
  s << in.rdbuf();
  return s.str();
}

struct TempDir {
  fsys::path path;
  explicit TempDir(const std::string& name)
      : path(fsys::temp_directory_path() / ("facetcoh_cli_" + name + "_" + std::to_string(::getpid()))) {
    fsys::remove_all(path);
    fsys::create_directories(path);
  }
  ~TempDir() { fsys::remove_all(path); }
  std::string operator/(const std::string& f) const { return (path / f).string(); }
};

std::string q(const std::string& s) { return "'" + s + "'"; }

// Ingests the four-query fixture into dir/gt.jsonl and dir/gen.jsonl.
void ingest_fixture(const TempDir& dir) {
  REQUIRE(run("ingest --out " + q(dir.path.string()) + " --input " + q((kData / "fixture_ground_truth.tsv").string()) +
              " --name gt.jsonl")
              .status == 0);
  REQUIRE(run("ingest --out " + q(dir.path.string()) + " --generated " +
              q((kData / "fixture_generated.jsonl").string()) + " --source bart --name gen.jsonl")
              .status == 0);
}

std::map<std::string, json> pairs_by_query(const std::string& jsonl) {
  std::map<std::string, json> out;
  std::istringstream in(jsonl);
  for (std::string line; std::getline(in, line);) {
    if (line.empty() || line[0] == '#') continue;
    const auto j = json::parse(line);
    out[j.at("query").get<std::string>()] = j;
  }
  return out;
}

}  // namespace

TEST_CASE("no arguments prints usage and fails") {
  const auto r = run("");
  CHECK(r.status != 0);
  CHECK(r.output.find("trinomial") != std::string::npos);
}

TEST_CASE("unknown subcommand is reported") {
  const auto r = run("frobnicate");
  CHECK(r.status != 0);
  CHECK(r.output.find("UnknownSubcommand") != std::string::npos);
}

TEST_CASE("trinomial marks significance") {
  TempDir dir("trinomial");
  const auto r = run("trinomial --out " + q(dir.path.string()) + " --wins 119 --ties 48 --losses 32");
  CHECK(r.status == 0);
  CHECK(r.output.find("†") != std::string::npos);
  const auto file = slurp(dir / "trinomial.txt");
  CHECK(file.rfind("# facetcoh trinomial --seed=13 --provider=hashed", 0) == 0);
  CHECK(file.find("--wins=119 --ties=48 --losses=32") != std::string::npos);

  const auto coh = run("trinomial --out " + q(dir.path.string()) +
                       " --wins 58 --ties 85 --losses 56 --criterion coherency");
  CHECK(coh.status == 0);
  CHECK(coh.output.find("†") == std::string::npos);
}

TEST_CASE("evaluate reproduces the directional relations and is byte-reproducible") {
  TempDir dir("evaluate");
  ingest_fixture(dir);
  const auto gt = dir / "gt.jsonl";
  const auto gen = dir / "gen.jsonl";
  fsys::create_directories(dir.path / "a");

  const auto r1 = run("evaluate --out " + q(dir / "a") + " --reference " + q(gt) + " --candidate " + q(gen));
  REQUIRE(r1.status == 0);
  CHECK(r1.output.find("bleu1") != std::string::npos);
  const auto pairs_a = slurp(dir.path / "a" / "metric_pairs.jsonl");
  const auto by_m_a = slurp(dir.path / "a" / "metrics_by_m.tsv");
  // Same configuration spelled differently: identical bytes, header included.
  const auto r2 = run("--seed 13 evaluate --candidate " + q(gen) + " --reference " + q(gt) + " --out " + q(dir / "a"));
  REQUIRE(r2.status == 0);
  CHECK(pairs_a == slurp(dir.path / "a" / "metric_pairs.jsonl"));
  CHECK(by_m_a == slurp(dir.path / "a" / "metrics_by_m.tsv"));

  const auto pairs = pairs_by_query(pairs_a);
  REQUIRE(pairs.size() == 4);
  const auto sem = [&](const std::string& qy) { return pairs.at(qy).at("bertscore_like").at("f1").get<double>(); };
  const auto bleu1 = [&](const std::string& qy) { return pairs.at(qy).at("bleu").at(0).get<double>(); };
  CHECK(sem("police sales") > sem("1982 mustang"));
  CHECK(bleu1("police sales") > bleu1("new call of duty game"));
}

TEST_CASE("failed runs leave no output behind") {
  TempDir dir("atomic");
  ingest_fixture(dir);
  fsys::create_directories(dir.path / "out");
  const auto r = run("evaluate --out " + q(dir / "out") + " --reference " + q(dir / "gt.jsonl") + " --candidate " +
                     q(dir / "missing.jsonl"));
  CHECK(r.status != 0);
  CHECK(r.output.find("cannot open") != std::string::npos);
  CHECK(fsys::is_empty(dir.path / "out"));

  const auto bad_model = run("predict --out " + q(dir / "out") + " --model " + q(dir / "gt.jsonl") + " --input " +
                             q(dir / "gt.jsonl"));
  CHECK(bad_model.status != 0);
  CHECK(fsys::is_empty(dir.path / "out"));
}

TEST_CASE("weak-label, split, train, eval-classifier, predict, prevalence") {
  TempDir dir("classifier");
  ingest_fixture(dir);
  const auto wl = run("weak-label --out " + q(dir.path.string()) + " --input " + q(dir / "gt.jsonl"));
  REQUIRE(wl.status == 0);
  CHECK(wl.output.find("weak:query-containment\t1") != std::string::npos);

  // A larger labeled corpus for training.
  {
    std::ofstream out(dir / "corpus.jsonl");
    facetcoh::write_labeled_jsonl(out, synthetic::weakly_labeled_corpus(200, 5));
  }
  const std::string o = " --out " + q(dir.path.string());
  REQUIRE(run("--seed 5 split" + o + " --input " + q(dir / "corpus.jsonl")).status == 0);
  const auto tr = run("--seed 5 train" + o + " --train " + q(dir / "train.jsonl") + " --validation " +
                      q(dir / "validation.jsonl"));
  REQUIRE(tr.status == 0);
  CHECK(tr.output.find("best epoch") != std::string::npos);
  const auto model_a = slurp(dir / "model.json");
  REQUIRE(run("--seed 5 train" + o + " --train " + q(dir / "train.jsonl") + " --validation " +
              q(dir / "validation.jsonl"))
              .status == 0);
  CHECK(slurp(dir / "model.json") == model_a);

  const auto ev = run("eval-classifier" + o + " --model " + q(dir / "model.json") + " --test " + q(dir / "test.jsonl"));
  REQUIRE(ev.status == 0);
  CHECK(ev.output.find("accuracy\t") != std::string::npos);

  REQUIRE(run("predict" + o + " --model " + q(dir / "model.json") + " --input " + q(dir / "gen.jsonl")).status == 0);
  const auto preds = slurp(dir / "predictions.jsonl");
  CHECK(preds.rfind("# facetcoh predict", 0) == 0);
  CHECK(preds.find("\"source\":\"generated:bart\"") != std::string::npos);

  const auto prev = run("prevalence" + o + " --group-by-m --model " + q(dir / "model.json") + " --input " +
                        q(dir / "gt.jsonl"));
  REQUIRE(prev.status == 0);
  const auto table = slurp(dir / "prevalence.tsv");
  CHECK(table.find("--group-by-m=true") != std::string::npos);
  CHECK(table.find("\n2\t") != std::string::npos);
  CHECK(table.find("\n3\t") != std::string::npos);

  const auto with_model = run("evaluate" + o + " --model " + q(dir / "model.json") + " --reference " +
                              q(dir / "gt.jsonl") + " --candidate " + q(dir / "gen.jsonl"));
  REQUIRE(with_model.status == 0);
  CHECK(slurp(dir / "metrics_by_m.tsv").find("coherency_gt") != std::string::npos);
}

TEST_CASE("subset-test and aggregate") {
  TempDir dir("stats");
  {
    std::ofstream a(dir / "a.txt");
    a << "# scores\n1\n1\n1\n1\n";
    std::ofstream b(dir / "b.txt");
    b << "0\n0\n0\n0\n";
  }
  const std::string o = " --out " + q(dir.path.string());
  const auto st = run("subset-test" + o + " --a " + q(dir / "a.txt") + " --b " + q(dir / "b.txt"));
  REQUIRE(st.status == 0);
  const auto first = slurp(dir / "subset_test.tsv");
  REQUIRE(run("subset-test" + o + " --a " + q(dir / "a.txt") + " --b " + q(dir / "b.txt")).status == 0);
  CHECK(slurp(dir / "subset_test.tsv") == first);

  // An export with 3 wins, 1 tie, 0 losses and one incomplete task.
  facetcoh::ExportResult ex;
  ex.criterion = facetcoh::Criterion::Quality;
  for (int i = 0; i < 3; ++i)
    ex.complete.push_back({"t" + std::to_string(i), "q", {{"x", facetcoh::Side::A}, {"y", facetcoh::Side::A}}});
  ex.complete.push_back({"t3", "q", {{"x", facetcoh::Side::A}, {"y", facetcoh::Side::B}}});
  ex.incomplete = {"t4"};
  {
    std::ofstream out(dir / "export.json");
    out << facetcoh::export_to_json(ex);
  }
  const auto ag = run("aggregate" + o + " --export " + q(dir / "export.json"));
  REQUIRE(ag.status == 0);
  CHECK(slurp(dir / "pairwise_counts.tsv").find("quality\t3\t1\t0") != std::string::npos);
  CHECK(slurp(dir / "incomplete_tasks.tsv").find("t4") != std::string::npos);
}

TEST_CASE("serve answers over HTTP and stops on SIGTERM") {
  TempDir dir("serve");
  ingest_fixture(dir);
  const std::string cmd = "sh -c 'echo $$; exec \"$0\" \"$@\"' '" + kCli + "' serve --port 0 --out " +
                          q(dir.path.string()) + " --reference " + q(dir / "gt.jsonl") + " --candidate " +
                          q(dir / "gen.jsonl") + " 2>&1";
  FILE* pipe = ::popen(cmd.c_str(), "r");
  REQUIRE(pipe != nullptr);
  char line[512];
  REQUIRE(std::fgets(line, sizeof line, pipe));
  const pid_t pid = static_cast<pid_t>(std::stol(line));
  REQUIRE(std::fgets(line, sizeof line, pipe));
  const std::string listening = line;
  const auto colon = listening.find(':');
  REQUIRE(colon != std::string::npos);
  const int port = std::stoi(listening.substr(colon + 1));

  httplib::Client cli("127.0.0.1", port);
  const auto progress = cli.Get("/progress");
  REQUIRE(progress);
  CHECK(progress->status == 200);
  CHECK(json::parse(progress->body).at("tasks") == 4);

  ::kill(pid, SIGTERM);
  const int raw = ::pclose(pipe);
  CHECK(WIFEXITED(raw));
  CHECK(WEXITSTATUS(raw) == 0);
}
