// Runs the built evloop executable; EVLOOP_CLI is its path.
#include <doctest/doctest.h>

#include <sys/wait.h>

#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <json.hpp>
#include <sstream>
#include <string>

namespace fs = std::filesystem;

namespace {

const fs::path kRoot = fs::temp_directory_path() / "evloop_cli_test";

struct Run {
  int code = -1;
  std::string out;
  std::string err;
};

std::string slurp(const fs::path& p) {
  std::ifstream in(p);
  std::ostringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

Run run(const std::string& args) {
  const fs::path o = kRoot / "stdout.txt", e = kRoot / "stderr.txt";
  const std::string cmd = std::string(EVLOOP_CLI) + " " + args + " > " + o.string() + " 2> " + e.string();
  const int status = std::system(cmd.c_str());
  Run r;
  r.code = WIFEXITED(status) ? WEXITSTATUS(status) : -1;
  r.out = slurp(o);
  r.err = slurp(e);
  return r;
}

std::string line_value(const std::string& text, const std::string& key) {
  const auto p = text.find(key);
  if (p == std::string::npos) return {};
  const auto end = text.find('\n', p);
  return text.substr(p + key.size(), end - p - key.size());
}

// Small, fast settings: 128 px scenes and network input, two epochs.
const char* kConfig = R"({
  "generator": {"image_size": 128},
  "train": {"input_size": 128, "epochs": 2, "batch_size": 8, "learning_rate": 0.001},
  "attribution": {"method": "guided_backprop"},
  "augment": {"T_max": 3}
})";

struct Workspace {
  Workspace() {
    fs::remove_all(kRoot);
    fs::create_directories(kRoot);
    std::ofstream(kRoot / "config.json") << kConfig;
  }
  ~Workspace() { fs::remove_all(kRoot); }
  std::string cfg() const { return "--config " + (kRoot / "config.json").string(); }
};

}  // namespace

TEST_CASE("command line workflow") {
  Workspace ws;
  const std::string a = (kRoot / "a").string(), b = (kRoot / "b").string();

  SUBCASE("usage errors") {
    CHECK(run("").code == 1);
    CHECK(run("frobnicate").code == 1);
    CHECK(run("gen-data").code == 1);
    CHECK(run(ws.cfg() + " --seed 1 gen-data --out " + a + " --counts 1,1,1").code == 1);
    std::ofstream(kRoot / "bad.json") << R"({"train": {"epoch": 3}})";
    const Run r = run("--config " + (kRoot / "bad.json").string() + " gen-data --out " + a);
    CHECK(r.code == 1);
    CHECK(r.err.find("train.epoch") != std::string::npos);
  }

  SUBCASE("generation is reproducible and output failures are reported") {
    const Run r1 = run(ws.cfg() + " --seed 4 gen-data --out " + a + " --counts 2,2,2,2");
    REQUIRE(r1.code == 0);
    const Run r2 = run(ws.cfg() + " --seed 4 gen-data --out " + b + " --counts 2,2,2,2");
    REQUIRE(r2.code == 0);
    const std::string h = line_value(r1.out, "dataset hash: ");
    CHECK(h.size() > 8);
    CHECK(h == line_value(r2.out, "dataset hash: "));
    const Run r3 = run(ws.cfg() + " --seed 5 gen-data --out " + b + " --counts 2,2,2,2");
    CHECK(line_value(r3.out, "dataset hash: ") != h);

    // A regular file where a directory is needed cannot be written into.
    std::ofstream(kRoot / "blocker") << "x";
    CHECK(run(ws.cfg() + " gen-data --out " + (kRoot / "blocker" / "sub").string()).code == 2);
  }

  SUBCASE("train, grade, explain and eval-froc") {
    REQUIRE(run(ws.cfg() + " --seed 2 gen-data --out " + a + " --counts 6,6,6,6").code == 0);
    const std::string model = (kRoot / "model").string();
    const Run t = run(ws.cfg() + " --seed 2 train --data " + a + " --out " + model);
    REQUIRE(t.code == 0);
    CHECK(t.err.find("warning: only 24 scenes") != std::string::npos);
    CHECK(fs::exists(kRoot / "model" / "model.evnet"));
    CHECK(fs::exists(kRoot / "model" / "history.json"));

    CHECK(run("train --data " + (kRoot / "nowhere").string() + " --out " + model).code == 2);

    const Run g = run("grade --model " + model + " --data " + a + " --out " + (kRoot / "graded").string());
    CHECK(g.code == 0);
    CHECK(fs::exists(kRoot / "graded" / "predictions.csv"));

    const std::string img = (kRoot / "a" / "images" / "0023.png").string();
    const Run e = run(ws.cfg() + " explain --model " + model + " --image " + img + " --augment --out " +
                      (kRoot / "explained").string());
    CHECK(e.code == 0);
    CHECK(fs::exists(kRoot / "explained" / "trace.json"));

    const std::string ev = (kRoot / "froc").string();
    const Run f = run(ws.cfg() + " eval-froc --model " + model + " --data " + a +
                      " --augment --radius-pct 1.4 --out " + ev);
    REQUIRE(f.code == 0);
    const auto s = nlohmann::json::parse(slurp(kRoot / "froc" / "summary.json"));
    CHECK(s["r"] == 2);
    CHECK(s["image_dim"] == 128);
    CHECK(s["method"] == "guided_backprop");
    CHECK(fs::exists(kRoot / "froc" / "traces.jsonl"));
    std::ifstream traces(kRoot / "froc" / "traces.jsonl");
    for (std::string line; std::getline(traces, line);) {
      const auto j = nlohmann::json::parse(line);
      CHECK(j["iterations"].size() <= 3);
    }

    const Run rep = run("report --inputs " + ev);
    CHECK(rep.code == 0);
    CHECK(rep.out.find("guided_backprop") != std::string::npos);

    CHECK(run(ws.cfg() + " eval-froc --model " + model + " --data " + a + " --method sparkles --out " + ev).code ==
          1);
    CHECK(run("eval-froc --model " + model + " --data " + (kRoot / "nowhere").string() + " --out " + ev).code == 2);

    // Nothing referable to evaluate.
    REQUIRE(run(ws.cfg() + " gen-data --out " + b + " --counts 4,0,0,0").code == 0);
    const Run none = run("eval-froc --model " + model + " --data " + b + " --out " + ev);
    CHECK(none.code != 0);
    CHECK_FALSE(none.err.empty());
  }
}
