#pragma once

#include <cstdint>
#include <optional>
#include <string>
#include <vector>

#include "sib/corpus.hpp"

namespace sib {

// A user's label plus their chronologically ordered pre-SIB history.
struct UserRecord {
    std::string user;
    int label = 0;  // 1 iff the user shared at least one SIB-labeled post
    std::vector<const Interaction*> history;  // strictly before first_sib_time
    std::optional<int64_t> first_sib_time;
};

struct ContextConfig {
    int N = 30;
    bool prioritize_posts = true;
    // Encode replies together with the parent post's title and body
    // (the replies-in-context input configuration); replies themselves are
    // always eligible context items.
    bool replies_in_context = false;
    bool include_prefix = true;

    void validate() const {
        if (N < 1) throw ValidationError("context: N must be >= 1");
    }
};

struct UserDatasetStats {
    int sib_users = 0;
    int nosib_users = 0;
    int excluded_sib_users = 0;    // no interaction before their first SIB post
    int excluded_nosib_users = 0;  // empty history
    int pct25 = 0, pct50 = 0, pct75 = 0;  // history length percentiles (nearest rank)
};

struct UserDataset {
    std::vector<UserRecord> records;
    UserDatasetStats stats;
};

// One record per user with nonempty history; SIB histories are truncated at
// the first SIB-labeled post (everything at or after it is discarded).
UserDataset build_user_dataset(const Corpus& corpus, const std::vector<PostLabel>& labels);

// Most recent N interactions of the history, chronological; with
// prioritize_posts the newest posts claim slots first and the newest replies
// fill the remainder.
std::vector<const Interaction*> select_context(const UserRecord& record, const ContextConfig& cfg);

// Keeps every minority record and downsamples the majority so the minority
// fraction matches the target within rounding. Training splits only.
std::vector<UserRecord> resample_training(const std::vector<UserRecord>& records,
                                          double target_minority_fraction, uint64_t seed);

int nearest_rank_percentile(std::vector<int> values, double pct);

void write_user_dataset(const UserDataset& ds, const std::string& records_path,
                        const std::string& stats_csv_path);
std::vector<UserRecord> read_user_records(const std::string& path, const Corpus& corpus);

}  // namespace sib
