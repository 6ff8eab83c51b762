#pragma once

#include <array>
#include <cstdint>
#include <map>
#include <optional>
#include <set>
#include <string>
#include <vector>

#include "sib/corpus.hpp"

namespace sib {

// Token and tag pools. The three token lexicons must be pairwise disjoint;
// sib_tags defaults to the Dutch forum tags used for candidate filtering.
struct Lexicons {
    std::vector<std::string> neutral;
    std::vector<std::string> distress;
    std::vector<std::string> explicit_sib;
    std::vector<std::string> neutral_tags;
    std::vector<std::string> distress_tags;
    std::vector<std::string> sib_tags;
};

Lexicons default_lexicons();

struct GenConfig {
    int n_users = 1000;
    double sib_prevalence = 0.04;
    // Target (25th, 50th, 75th) percentiles of per-user history length.
    std::array<int, 3> history_quantiles = {1, 3, 8};
    // Distress-token rate multiplier for SIB users' pre-SIB interactions:
    // rate = base_distress_rate * (1 + signal_strength). Zero means the two
    // classes are exchangeable in distribution.
    double signal_strength = 4.0;
    Lexicons vocab = default_lexicons();
    double reply_fraction = 0.3;
    uint64_t seed = 42;

    // Shape knobs for the generator.
    double base_distress_rate = 0.05;
    // Chance that a non-terminal post is a "hard" one: tagged with a SIB tag
    // and written in heavy distress language (rate 0.5 for both classes), but
    // not an actual self-report.
    double hard_tag_rate = 0.03;
    int body_tokens_min = 8, body_tokens_max = 30;
    int title_tokens_min = 3, title_tokens_max = 6;
    int max_history = 60;
    int window_days = 500;

    void validate() const;
    double distress_rate(bool risk) const;  // clamped token rate per class
    double distress_tag_rate(bool risk) const;
};

struct UserTruth {
    int risk = 0;  // 1 iff the user owns at least one true SIB post
    std::optional<std::string> first_sib_post_id;
    std::optional<int64_t> first_sib_time;
};

struct GroundTruth {
    std::map<std::string, UserTruth> users;
    std::set<std::string> sib_post_ids;

    bool is_sib_post(const std::string& post_id) const { return sib_post_ids.count(post_id) > 0; }
};

struct SynthResult {
    Corpus corpus;
    GroundTruth truth;
    // Synthetic stand-in for the human annotation pass: ground-truth labels
    // for every tag-filtered candidate post, hard flag on the No-SIB ones.
    std::vector<PostLabel> annotations;
};

SynthResult generate_corpus(const GenConfig& config);

// Monte-Carlo estimate of the Bayes-optimal balanced accuracy for the
// user-level early prediction task under `config`, via exact likelihood-ratio
// classification on simulated pre-SIB histories. Used as the ceiling in
// acceptance tests.
double bayes_oracle_rate(const GenConfig& config, int n_mc);

void write_ground_truth(const GroundTruth& truth, const std::string& path);
GroundTruth read_ground_truth(const std::string& path);

// Lognormal (mu, sigma) whose rounded-and-clamped samples hit the target
// quantiles; exposed for tests.
std::pair<double, double> fit_history_lognormal(const std::array<int, 3>& quantiles,
                                                int max_history);

}  // namespace sib
