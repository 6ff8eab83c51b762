#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <cstdlib>
#include <filesystem>
#include <fstream>

#include "sib/pipeline.hpp"

using namespace sib;
using pipeline::json;
namespace fs = std::filesystem;

namespace {

struct TempRoot {
    std::string path;
    TempRoot() {
        path = (fs::temp_directory_path() / ("sib-pipe-test-" + std::to_string(::getpid()) + "-" +
                                             std::to_string(counter++)))
                   .string();
        fs::remove_all(path);
    }
    ~TempRoot() { fs::remove_all(path); }
    static int counter;
};
int TempRoot::counter = 0;

json tiny_config() {
    return pipeline::load_config(std::nullopt,
                                 {"gen.n_users=80", "detector.negatives=60",
                                  "detector.epochs=2", "train.max_epochs=2", "train.k_folds=2"},
                                 7);
}

int run_cli(const std::string& args) {
    const std::string cmd = std::string(SIB_CLI_PATH) + " " + args + " > /dev/null 2>&1";
    return WEXITSTATUS(std::system(cmd.c_str()));
}

}  // namespace

TEST_CASE("config defaults, overrides and hashing") {
    json base = pipeline::load_config(std::nullopt, {}, std::nullopt);
    CHECK(base.at("seed").get<int>() == 42);
    CHECK(base.at("gen").at("n_users").get<int>() == 2000);

    json tweaked = pipeline::load_config(std::nullopt, {"gen.n_users=50", "model.dropout=0.2"},
                                         std::nullopt);
    CHECK(tweaked.at("gen").at("n_users").get<int>() == 50);
    CHECK(tweaked.at("model").at("dropout").get<double>() == 0.2);

    // string values survive unquoted
    json s = pipeline::load_config(std::nullopt, {"paths.corpus=/tmp/x.jsonl"}, std::nullopt);
    CHECK(s.at("paths").at("corpus").get<std::string>() == "/tmp/x.jsonl");

    CHECK(pipeline::config_hash_hex(base) == pipeline::config_hash_hex(base));
    CHECK(pipeline::config_hash_hex(base) != pipeline::config_hash_hex(tweaked));
    CHECK(pipeline::config_hash_hex(base).size() == 16);

    CHECK_THROWS_AS(pipeline::load_config(std::nullopt, {"no-equals-sign"}, std::nullopt),
                    ValidationError);
    CHECK_THROWS_AS(pipeline::load_config("missing_config.json", {}, std::nullopt),
                    ValidationError);
}

TEST_CASE("typed config extraction honors the global seed") {
    json cfg = pipeline::load_config(std::nullopt, {}, 123);
    CHECK(pipeline::gen_config_from(cfg).seed == 123);
    CHECK(pipeline::train_config_from(cfg).seed == 123);
    // detector and model seeds are derived, not equal to the global seed
    CHECK(pipeline::detector_config_from(cfg).seed != 123);
    json cfg2 = pipeline::load_config(std::nullopt, {"gen.seed=9"}, 123);
    CHECK(pipeline::gen_config_from(cfg2).seed == 9);
}

TEST_CASE("synth then ingest resolves artifacts by newest run") {
    TempRoot root;
    json cfg = tiny_config();
    const std::string synth_dir = pipeline::run_synth(cfg, root.path);
    CHECK(fs::exists(synth_dir + "/corpus.jsonl"));
    CHECK(fs::exists(synth_dir + "/run.json"));

    const std::string ingest_dir = pipeline::run_ingest(cfg, root.path);
    std::ifstream in(ingest_dir + "/summary.json");
    json summary = json::parse(in);
    CHECK(summary.at("interactions").get<int>() > 80);
    CHECK(summary.at("users").get<int>() <= 80);
}

TEST_CASE("missing upstream artifacts name the artifact") {
    TempRoot root;
    json cfg = tiny_config();
    CHECK_THROWS_WITH_AS(pipeline::run_ingest(cfg, root.path),
                         doctest::Contains("corpus.jsonl"), ValidationError);
    CHECK_THROWS_WITH_AS(pipeline::run_build_users(cfg, root.path),
                         doctest::Contains("corpus.jsonl"), ValidationError);
    // explicit path that does not exist
    json cfg2 = pipeline::load_config(std::nullopt, {"paths.corpus=/nonexistent/c.jsonl"},
                                      std::nullopt);
    CHECK_THROWS_WITH_AS(pipeline::run_ingest(cfg2, root.path),
                         doctest::Contains("missing upstream artifact"), ValidationError);
}

TEST_CASE("report aggregates runs and rejects schema mismatches") {
    TempRoot root;
    json cfg = tiny_config();
    CHECK_THROWS_AS(pipeline::run_report(cfg, root.path), ValidationError);

    pipeline::run_synth(cfg, root.path);
    const std::string report_dir = pipeline::run_report(cfg, root.path);
    std::ifstream in(report_dir + "/report.json");
    json report = json::parse(in);
    CHECK(report.size() == 1);
    CHECK(report[0].at("subcommand") == "synth");
    CHECK(fs::exists(report_dir + "/report.md"));

    // tamper with a run's schema version
    std::string victim;
    for (const auto& e : fs::directory_iterator(root.path))
        if (e.path().filename().string().find("-synth") != std::string::npos)
            victim = e.path().string();
    std::ifstream rj(victim + "/run.json");
    json meta = json::parse(rj);
    rj.close();
    meta["schema_version"] = 99;
    std::ofstream out(victim + "/run.json");
    out << meta.dump();
    out.close();
    CHECK_THROWS_WITH_AS(pipeline::run_report(cfg, root.path),
                         doctest::Contains("schema version"), ValidationError);
}

TEST_CASE("cli exit codes") {
    TempRoot root;
    // report with no prior runs -> validation error -> exit 1
    CHECK(run_cli("--out " + root.path + " report") == 1);
    // invalid config value -> exit 1
    CHECK(run_cli("--out " + root.path + " --set gen.n_users=0 synth") == 1);
    // unknown subcommand -> parse error -> exit 1
    CHECK(run_cli("--out " + root.path + " frobnicate") == 1);
    // help -> exit 0
    CHECK(run_cli("--help") == 0);
    // a successful run -> exit 0
    CHECK(run_cli("--out " + root.path + " --set gen.n_users=60 synth") == 0);
}

TEST_CASE("run directory naming embeds hash and collisions get suffixes") {
    TempRoot root;
    json cfg = tiny_config();
    const std::string d1 = pipeline::run_synth(cfg, root.path);
    const std::string d2 = pipeline::run_synth(cfg, root.path);
    CHECK(d1 != d2);
    const std::string hash8 = pipeline::config_hash_hex(cfg).substr(0, 8);
    CHECK(d1.find(hash8) != std::string::npos);
    CHECK(fs::path(d1).filename().string().find("synth") != std::string::npos);

    // identical config + seed: identical artifact bytes across run dirs
    auto slurp = [](const std::string& p) {
        std::ifstream in(p, std::ios::binary);
        std::stringstream ss;
        ss << in.rdbuf();
        return ss.str();
    };
    CHECK(slurp(d1 + "/corpus.jsonl") == slurp(d2 + "/corpus.jsonl"));
    CHECK(slurp(d1 + "/ground_truth.jsonl") == slurp(d2 + "/ground_truth.jsonl"));
}
