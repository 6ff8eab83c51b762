#include "sib/userset.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <unordered_map>
#include <unordered_set>

#include <json.hpp>

#include "sib/rng.hpp"

namespace sib {

using nlohmann::json;

UserDataset build_user_dataset(const Corpus& corpus, const std::vector<PostLabel>& labels) {
    std::unordered_map<std::string, SibLabel> label_of;
    for (const PostLabel& pl : labels) label_of[pl.post_id] = pl.label;
    for (const Interaction& ia : corpus.interactions()) {
        if (ia.is_post() && !label_of.count(ia.id))
            throw ValidationError("unlabeled post '" + ia.id + "'");
    }
    auto is_sib_post = [&](const Interaction& ia) {
        return ia.is_post() && label_of.at(ia.id) == SibLabel::Sib;
    };

    UserDataset ds;
    std::vector<int> lengths;
    for (const auto& [user, idxs] : corpus.by_user()) {
        UserRecord rec;
        rec.user = user;
        for (int i : idxs) {
            const Interaction& ia = corpus.interactions()[i];
            if (is_sib_post(ia)) {
                rec.label = 1;
                rec.first_sib_time = ia.timestamp;
                break;  // truncate at the first SIB post; later activity is discarded
            }
        }
        for (int i : idxs) {
            const Interaction& ia = corpus.interactions()[i];
            if (rec.first_sib_time && ia.timestamp >= *rec.first_sib_time) break;
            rec.history.push_back(&ia);
        }
        if (rec.history.empty()) {
            if (rec.label == 1)
                ++ds.stats.excluded_sib_users;
            else
                ++ds.stats.excluded_nosib_users;
            continue;
        }
        lengths.push_back(static_cast<int>(rec.history.size()));
        if (rec.label == 1)
            ++ds.stats.sib_users;
        else
            ++ds.stats.nosib_users;
        ds.records.push_back(std::move(rec));
    }
    if (!lengths.empty()) {
        ds.stats.pct25 = nearest_rank_percentile(lengths, 25.0);
        ds.stats.pct50 = nearest_rank_percentile(lengths, 50.0);
        ds.stats.pct75 = nearest_rank_percentile(lengths, 75.0);
    }
    return ds;
}

std::vector<const Interaction*> select_context(const UserRecord& record, const ContextConfig& cfg) {
    cfg.validate();
    if (record.history.empty()) throw ValidationError("select_context: empty history");
    const size_t n = static_cast<size_t>(cfg.N);
    std::vector<const Interaction*> chosen;
    if (record.history.size() <= n) {
        chosen = record.history;
    } else if (!cfg.prioritize_posts) {
        chosen.assign(record.history.end() - static_cast<long>(n), record.history.end());
    } else {
        std::vector<const Interaction*> posts, replies;
        for (const Interaction* ia : record.history)
            (ia->is_post() ? posts : replies).push_back(ia);
        chosen.clear();
        const size_t take_posts = std::min(posts.size(), n);
        chosen.insert(chosen.end(), posts.end() - static_cast<long>(take_posts), posts.end());
        const size_t take_replies = std::min(replies.size(), n - take_posts);
        chosen.insert(chosen.end(), replies.end() - static_cast<long>(take_replies), replies.end());
        std::sort(chosen.begin(), chosen.end(),
                  [](const Interaction* a, const Interaction* b) { return chrono_less(*a, *b); });
    }
    return chosen;
}

std::vector<UserRecord> resample_training(const std::vector<UserRecord>& records,
                                          double target_minority_fraction, uint64_t seed) {
    if (!(target_minority_fraction > 0.0 && target_minority_fraction < 1.0))
        throw ValidationError("resample_training: fraction must be in (0,1)");
    size_t pos = 0, neg = 0;
    for (const UserRecord& r : records) (r.label == 1 ? pos : neg)++;
    if (pos == 0 || neg == 0)
        throw ValidationError("resample_training: both classes must be present");
    const int minority_label = pos <= neg ? 1 : 0;
    const size_t minority = std::min(pos, neg), majority = std::max(pos, neg);
    const double f = target_minority_fraction;
    const size_t keep_majority = std::min(
        majority,
        static_cast<size_t>(std::llround(static_cast<double>(minority) * (1.0 - f) / f)));
    if (keep_majority == majority) return records;

    std::vector<size_t> majority_idx;
    for (size_t i = 0; i < records.size(); ++i)
        if (records[i].label != minority_label) majority_idx.push_back(i);
    Rng rng(seed);
    for (size_t i = 0; i < keep_majority; ++i) {
        size_t j = i + rng.uniform_int(majority_idx.size() - i);
        std::swap(majority_idx[i], majority_idx[j]);
    }
    majority_idx.resize(keep_majority);
    std::unordered_set<size_t> kept(majority_idx.begin(), majority_idx.end());
    std::vector<UserRecord> out;
    for (size_t i = 0; i < records.size(); ++i)
        if (records[i].label == minority_label || kept.count(i)) out.push_back(records[i]);
    return out;
}

int nearest_rank_percentile(std::vector<int> values, double pct) {
    if (values.empty()) throw ValidationError("percentile of empty set");
    std::sort(values.begin(), values.end());
    const size_t rank = static_cast<size_t>(
        std::ceil(pct / 100.0 * static_cast<double>(values.size())));
    return values[std::max<size_t>(rank, 1) - 1];
}

void write_user_dataset(const UserDataset& ds, const std::string& records_path,
                        const std::string& stats_csv_path) {
    std::ofstream out(records_path);
    if (!out) throw std::runtime_error("cannot write user dataset '" + records_path + "'");
    for (const UserRecord& rec : ds.records) {
        json j;
        j["user"] = rec.user;
        j["label"] = rec.label;
        if (rec.first_sib_time) j["first_sib_time"] = format_utc(*rec.first_sib_time);
        json hist = json::array();
        for (const Interaction* ia : rec.history) hist.push_back(ia->id);
        j["history"] = hist;
        out << j.dump() << "\n";
    }
    std::ofstream csv(stats_csv_path);
    if (!csv) throw std::runtime_error("cannot write stats csv '" + stats_csv_path + "'");
    csv << "sib_users,nosib_users,excluded_sib_users,excluded_nosib_users,"
           "history_len_p25,history_len_p50,history_len_p75\n";
    csv << ds.stats.sib_users << ',' << ds.stats.nosib_users << ','
        << ds.stats.excluded_sib_users << ',' << ds.stats.excluded_nosib_users << ','
        << ds.stats.pct25 << ',' << ds.stats.pct50 << ',' << ds.stats.pct75 << "\n";
}

std::vector<UserRecord> read_user_records(const std::string& path, const Corpus& corpus) {
    std::ifstream in(path);
    if (!in) throw ValidationError("cannot open user dataset '" + path + "'");
    std::vector<UserRecord> out;
    std::string line;
    size_t lineno = 0;
    while (std::getline(in, line)) {
        ++lineno;
        if (line.empty()) continue;
        try {
            json j = json::parse(line);
            UserRecord rec;
            rec.user = j.at("user").get<std::string>();
            rec.label = j.at("label").get<int>();
            if (j.contains("first_sib_time")) {
                auto t = parse_utc(j.at("first_sib_time").get<std::string>());
                if (!t) throw ValidationError("bad first_sib_time");
                rec.first_sib_time = *t;
            }
            for (const auto& idj : j.at("history")) {
                const Interaction* ia = corpus.by_id(idj.get<std::string>());
                if (!ia)
                    throw ValidationError("history references unknown interaction '" +
                                          idj.get<std::string>() + "'");
                rec.history.push_back(ia);
            }
            out.push_back(std::move(rec));
        } catch (const json::exception& e) {
            throw ValidationError(path + ":" + std::to_string(lineno) + ": " + e.what());
        }
    }
    return out;
}

}  // namespace sib
