#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <cstdio>
#include <fstream>
#include <sstream>

#include "sib/synthgen.hpp"

using namespace sib;

namespace {

GenConfig small_config(uint64_t seed = 42, int n_users = 200) {
    GenConfig cfg;
    cfg.n_users = n_users;
    cfg.seed = seed;
    return cfg;
}

std::string corpus_bytes(const Corpus& c) {
    std::string out;
    for (const Interaction& ia : c.interactions()) out += interaction_to_json(ia) + "\n";
    return out;
}

}  // namespace

TEST_CASE("lognormal fit hits the target quantiles") {
    auto [mu, sigma] = fit_history_lognormal({1, 3, 8}, 60);
    CHECK(mu == doctest::Approx(std::log(3.0)));
    CHECK(sigma > 1.0);
    CHECK(sigma < 2.0);
    // Empirical percentiles of a big sample must land on the targets.
    GenConfig cfg;
    Rng rng(1);
    std::vector<int> lens;
    for (int i = 0; i < 60000; ++i) {
        double x = std::exp(mu + sigma * rng.normal());
        lens.push_back(static_cast<int>(std::clamp<long long>(std::llround(x), 1, 60)));
    }
    std::sort(lens.begin(), lens.end());
    auto pct = [&](double p) { return lens[static_cast<size_t>(std::ceil(p * lens.size())) - 1]; };
    CHECK(pct(0.25) == 1);
    CHECK(pct(0.50) == 3);
    CHECK(pct(0.75) == 8);
}

TEST_CASE("generated corpus is valid and deterministic") {
    SynthResult a = generate_corpus(small_config());
    SynthResult b = generate_corpus(small_config());
    CHECK(corpus_bytes(a.corpus) == corpus_bytes(b.corpus));
    CHECK(a.corpus.size() > 200);

    // Round-trips through the ingester (validation included).
    const std::string path = "synth_test.jsonl";
    emit_corpus(a.corpus, path);
    Corpus re = ingest_corpus(path);
    std::remove(path.c_str());
    CHECK(re.size() == a.corpus.size());

    SynthResult c = generate_corpus(small_config(43));
    CHECK(corpus_bytes(a.corpus) != corpus_bytes(c.corpus));
}

TEST_CASE("sib users end with exactly one explicit terminal post") {
    SynthResult r = generate_corpus(small_config(7, 400));
    int sib_users = 0;
    for (const auto& [user, ut] : r.truth.users) {
        const auto& idxs = r.corpus.by_user().at(user);
        if (ut.risk == 1) {
            ++sib_users;
            REQUIRE(ut.first_sib_post_id.has_value());
            const Interaction* sib = r.corpus.by_id(*ut.first_sib_post_id);
            REQUIRE(sib != nullptr);
            CHECK(sib->is_post());
            // terminal: strictly later than every other interaction of the user
            for (int i : idxs) {
                const Interaction& ia = r.corpus.interactions()[i];
                if (ia.id != sib->id) CHECK(ia.timestamp < *ut.first_sib_time);
            }
            // carries a SIB tag and explicit lexicon
            bool tagged = false;
            for (const auto& t : sib->tags) tagged |= default_sib_tags().count(t) > 0;
            CHECK(tagged);
            bool has_explicit = false;
            for (const auto& tok : default_lexicons().explicit_sib)
                has_explicit |= sib->body.find(tok) != std::string::npos;
            CHECK(has_explicit);
            // exactly one true SIB post per user
            int owned = 0;
            for (int i : idxs) owned += r.truth.is_sib_post(r.corpus.interactions()[i].id);
            CHECK(owned == 1);
        } else {
            // No-SIB users never emit explicit lexicon
            for (int i : idxs) {
                const Interaction& ia = r.corpus.interactions()[i];
                for (const auto& tok : default_lexicons().explicit_sib) {
                    CHECK(ia.body.find(tok) == std::string::npos);
                    if (ia.title) CHECK(ia.title->find(tok) == std::string::npos);
                }
            }
        }
    }
    CHECK(sib_users > 0);
}

TEST_CASE("sib user count within binomial 99pct interval") {
    GenConfig cfg = small_config(42, 1000);
    SynthResult r = generate_corpus(cfg);
    int sib = 0;
    for (const auto& [user, ut] : r.truth.users) sib += ut.risk;
    CHECK(sib >= 22);
    CHECK(sib <= 59);
}

TEST_CASE("annotations cover candidates with hard flags") {
    SynthResult r = generate_corpus(small_config(11, 600));
    std::set<std::string> sibtags(default_sib_tags().begin(), default_sib_tags().end());
    auto cands = filter_annotation_candidates(r.corpus, sibtags);
    CHECK(r.annotations.size() == cands.size());
    int hard = 0, sib = 0;
    for (const PostLabel& pl : r.annotations) {
        if (pl.hard) {
            CHECK(pl.label == SibLabel::NoSib);
            ++hard;
        } else {
            CHECK(pl.label == SibLabel::Sib);
            ++sib;
        }
        CHECK(r.truth.is_sib_post(pl.post_id) == (pl.label == SibLabel::Sib));
    }
    CHECK(hard > 0);
    CHECK(sib > 0);
}

TEST_CASE("zero signal strength makes classes exchangeable") {
    GenConfig cfg = small_config(21, 2000);
    cfg.signal_strength = 0.0;
    CHECK(cfg.distress_rate(true) == cfg.distress_rate(false));
    const double rate = bayes_oracle_rate(cfg, 4000);
    CHECK(rate == doctest::Approx(0.5).epsilon(0.02));
}

TEST_CASE("bayes oracle rises with signal strength toward 1") {
    GenConfig cfg = small_config(5, 100);
    cfg.signal_strength = 0.0;
    const double r0 = bayes_oracle_rate(cfg, 6000);
    cfg.signal_strength = 2.0;
    const double r2 = bayes_oracle_rate(cfg, 6000);
    cfg.signal_strength = 9.0;
    const double r9 = bayes_oracle_rate(cfg, 6000);
    CHECK(r2 >= r0 - 0.02);
    CHECK(r9 >= r2 - 0.02);
    CHECK(r9 > 0.95);
    cfg.signal_strength = 100.0;
    CHECK(bayes_oracle_rate(cfg, 6000) > 0.99);
}

TEST_CASE("ground truth file round trip") {
    SynthResult r = generate_corpus(small_config(3, 50));
    const std::string path = "truth_test.jsonl";
    write_ground_truth(r.truth, path);
    GroundTruth t2 = read_ground_truth(path);
    std::remove(path.c_str());
    CHECK(t2.users.size() == r.truth.users.size());
    CHECK(t2.sib_post_ids == r.truth.sib_post_ids);
    for (const auto& [u, ut] : r.truth.users) {
        CHECK(t2.users.at(u).risk == ut.risk);
        CHECK(t2.users.at(u).first_sib_time == ut.first_sib_time);
    }
}

TEST_CASE("degenerate configs are rejected") {
    GenConfig cfg = small_config();
    cfg.n_users = 0;
    CHECK_THROWS_AS(generate_corpus(cfg), ValidationError);
    cfg = small_config();
    cfg.sib_prevalence = 0.0;
    CHECK_THROWS_AS(generate_corpus(cfg), ValidationError);
    cfg = small_config();
    cfg.vocab.distress.push_back(cfg.vocab.neutral[0]);
    CHECK_THROWS_AS(generate_corpus(cfg), ValidationError);
    cfg = small_config();
    cfg.signal_strength = -1.0;
    CHECK_THROWS_AS(generate_corpus(cfg), ValidationError);
}
