#include "sib/synthgen.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <stdexcept>

#include <json.hpp>

#include "sib/tokenizer.hpp"

namespace sib {

using nlohmann::json;

Lexicons default_lexicons() {
    Lexicons lex;
    lex.neutral = {
        "school",  "huiswerk", "toets",    "vrienden", "vriendin", "film",    "serie",
        "muziek",  "gitaar",   "voetbal",  "hockey",   "fiets",    "vakantie", "weekend",
        "verjaardag", "feest", "spel",     "game",     "boek",     "tekenen", "knutselen",
        "hond",    "kat",      "konijn",   "broer",    "zus",      "ouders",  "oma",
        "opa",     "leraar",   "klas",     "pauze",    "trein",    "bus",     "winkel",
        "koken",   "pizza",    "ontbijt",  "slaapfeest", "zwemmen",
    };
    lex.distress = {
        "verdrietig", "somber",   "hopeloos", "eenzaam",  "huilen",   "moe",
        "doodmoe",    "donker",   "pijn",     "bang",     "paniek",   "waardeloos",
        "schuldig",   "leeg",     "wanhopig", "slapeloos",
    };
    lex.explicit_sib = {
        "doodswens", "zelfmoordplan", "suicidegedachten", "eruitstappen", "nietmeerverder",
    };
    lex.neutral_tags = {"school", "vrienden", "familie",  "liefde", "hobby",
                        "sport",  "muziek",   "games",    "huiswerk", "verkering"};
    lex.distress_tags = {"stress", "somberheid", "eenzaamheid", "verdriet", "angst"};
    lex.sib_tags.assign(default_sib_tags().begin(), default_sib_tags().end());
    return lex;
}

void GenConfig::validate() const {
    if (n_users < 1) throw ValidationError("generator: n_users must be positive");
    if (!(sib_prevalence > 0.0 && sib_prevalence < 1.0))
        throw ValidationError("generator: sib_prevalence must be in (0,1)");
    if (signal_strength < 0.0) throw ValidationError("generator: signal_strength must be >= 0");
    if (!(reply_fraction >= 0.0 && reply_fraction < 1.0))
        throw ValidationError("generator: reply_fraction must be in [0,1)");
    if (!(base_distress_rate > 0.0 && base_distress_rate < 1.0))
        throw ValidationError("generator: base_distress_rate must be in (0,1)");
    if (history_quantiles[0] < 1 || history_quantiles[0] > history_quantiles[1] ||
        history_quantiles[1] > history_quantiles[2] || history_quantiles[2] > max_history)
        throw ValidationError("generator: history quantiles must be ascending and fit max_history");
    if (vocab.neutral.empty() || vocab.distress.empty() || vocab.explicit_sib.empty() ||
        vocab.neutral_tags.empty() || vocab.distress_tags.empty() || vocab.sib_tags.empty())
        throw ValidationError("generator: all lexicons must be nonempty");
    auto disjoint = [](const std::vector<std::string>& a, const std::vector<std::string>& b) {
        for (const auto& x : a)
            for (const auto& y : b)
                if (x == y) return false;
        return true;
    };
    if (!disjoint(vocab.neutral, vocab.distress) || !disjoint(vocab.neutral, vocab.explicit_sib) ||
        !disjoint(vocab.distress, vocab.explicit_sib))
        throw ValidationError("generator: token lexicons must be pairwise disjoint");
    if (body_tokens_min < 1 || body_tokens_max < body_tokens_min || title_tokens_min < 1 ||
        title_tokens_max < title_tokens_min)
        throw ValidationError("generator: token count ranges invalid");
    if (window_days < 2) throw ValidationError("generator: window_days must be >= 2");
}

double GenConfig::distress_rate(bool risk) const {
    const double r = risk ? base_distress_rate * (1.0 + signal_strength) : base_distress_rate;
    return std::min(r, 0.95);
}

double GenConfig::distress_tag_rate(bool risk) const {
    return std::min(distress_rate(risk), 0.9);
}

namespace {

double normal_cdf(double z) { return 0.5 * std::erfc(-z * 0.7071067811865475244); }

// P(clamp(round(exp(mu + sigma Z)), 1, max) <= k)
double length_cdf(double mu, double sigma, int k, int max_history) {
    if (k < 1) return 0.0;
    if (k >= max_history) return 1.0;
    return normal_cdf((std::log(k + 0.5) - mu) / sigma);
}

}  // namespace

std::pair<double, double> fit_history_lognormal(const std::array<int, 3>& q, int max_history) {
    const double mu = std::log(static_cast<double>(q[1]));
    const double targets[3] = {0.25, 0.5, 0.75};
    double best_sigma = 1.0, best_margin = -1e9;
    for (double sigma = 0.2; sigma <= 3.0; sigma += 0.002) {
        double margin = 1e9;
        for (int i = 0; i < 3; ++i) {
            // Nearest-rank percentile lands exactly on q[i] iff the CDF
            // crosses the target inside [q[i]-1, q[i]].
            margin = std::min(margin, length_cdf(mu, sigma, q[i], max_history) - targets[i]);
            margin = std::min(margin, targets[i] - length_cdf(mu, sigma, q[i] - 1, max_history));
        }
        if (margin > best_margin) {
            best_margin = margin;
            best_sigma = sigma;
        }
    }
    if (best_margin <= 0.0)
        throw ValidationError("generator: cannot fit a lognormal to the history quantiles");
    return {mu, best_sigma};
}

namespace {

struct UserPlan {
    std::string name;
    bool risk = false;
    int history_len = 0;
    std::vector<Interaction> items;  // chronological; terminal SIB post last if risk
    std::optional<int> sib_index;
};

std::string pick(Rng& rng, const std::vector<std::string>& pool) {
    return pool[rng.uniform_int(pool.size())];
}

std::string make_text(Rng& rng, const GenConfig& cfg, int n_tokens, double distress_rate,
                      double explicit_rate) {
    std::vector<std::string> toks;
    bool has_explicit = false;
    for (int i = 0; i < n_tokens; ++i) {
        const double u = rng.uniform();
        if (u < explicit_rate) {
            toks.push_back(pick(rng, cfg.vocab.explicit_sib));
            has_explicit = true;
        } else if (u < explicit_rate + distress_rate * (1.0 - explicit_rate)) {
            toks.push_back(pick(rng, cfg.vocab.distress));
        } else {
            toks.push_back(pick(rng, cfg.vocab.neutral));
        }
    }
    if (explicit_rate > 0.0 && !has_explicit) {
        // Terminal posts must contain explicit-SIB language; plant it at a
        // random position.
        toks.insert(toks.begin() + static_cast<long>(rng.uniform_int(toks.size() + 1)),
                    pick(rng, cfg.vocab.explicit_sib));
    }
    std::string out;
    for (const std::string& t : toks) {
        if (!out.empty()) out += ' ';
        out += t;
    }
    return out;
}

std::vector<std::string> make_tags(Rng& rng, const GenConfig& cfg, double distress_tag_rate) {
    std::vector<std::string> tags;
    const int n = static_cast<int>(rng.uniform_int(3));  // 0..2
    for (int i = 0; i < n; ++i) {
        const std::string t = rng.uniform() < distress_tag_rate
                                  ? pick(rng, cfg.vocab.distress_tags)
                                  : pick(rng, cfg.vocab.neutral_tags);
        if (std::find(tags.begin(), tags.end(), t) == tags.end()) tags.push_back(t);
    }
    return tags;
}

int sample_history_len(Rng& rng, const GenConfig& cfg, double mu, double sigma) {
    const double x = std::exp(mu + sigma * rng.normal());
    const long long r = std::llround(x);
    return static_cast<int>(std::clamp<long long>(r, 1, cfg.max_history));
}

}  // namespace

SynthResult generate_corpus(const GenConfig& config) {
    config.validate();
    const auto [mu, sigma] = fit_history_lognormal(config.history_quantiles, config.max_history);
    const int64_t window_start = *parse_utc("2024-01-01T00:00:00Z");
    const int64_t window_seconds = static_cast<int64_t>(config.window_days) * kSecondsPerDay;
    const Rng root(config.seed);

    std::vector<UserPlan> plans(config.n_users);
    for (int u = 0; u < config.n_users; ++u) {
        Rng rng = root.fork(static_cast<uint64_t>(u));
        UserPlan& plan = plans[u];
        char name[24];
        std::snprintf(name, sizeof(name), "u%06d", u);
        plan.name = name;
        plan.risk = rng.bernoulli(config.sib_prevalence);
        plan.history_len = sample_history_len(rng, config, mu, sigma);

        const int total = plan.history_len + (plan.risk ? 1 : 0);
        std::vector<int64_t> times(total);
        for (int i = 0; i < total; ++i)
            times[i] = window_start + static_cast<int64_t>(rng.uniform_int(window_seconds));
        std::sort(times.begin(), times.end());
        for (int i = 1; i < total; ++i)
            if (times[i] <= times[i - 1]) times[i] = times[i - 1] + 1;

        const double rate = config.distress_rate(plan.risk);
        const double tag_rate = config.distress_tag_rate(plan.risk);
        for (int j = 0; j < total; ++j) {
            Interaction ia;
            char iid[40];
            std::snprintf(iid, sizeof(iid), "%s-i%02d", plan.name.c_str(), j);
            ia.id = iid;
            ia.user = plan.name;
            ia.timestamp = times[j];
            const bool terminal = plan.risk && j == total - 1;
            if (terminal) {
                ia.kind = Kind::Post;
                ia.title = make_text(rng, config, config.title_tokens_max, rate, 0.25);
                ia.body = make_text(rng, config,
                                    config.body_tokens_min +
                                        static_cast<int>(rng.uniform_int(
                                            config.body_tokens_max - config.body_tokens_min + 1)),
                                    rate, 0.35);
                ia.tags = make_tags(rng, config, tag_rate);
                ia.tags.insert(ia.tags.begin(), pick(rng, config.vocab.sib_tags));
                plan.sib_index = j;
            } else {
                const bool is_post = rng.uniform() >= config.reply_fraction;
                const bool hard = is_post && rng.bernoulli(config.hard_tag_rate);
                const double r = hard ? 0.5 : rate;
                const int n_body = config.body_tokens_min +
                                   static_cast<int>(rng.uniform_int(
                                       config.body_tokens_max - config.body_tokens_min + 1));
                if (is_post) {
                    ia.kind = Kind::Post;
                    const int n_title = config.title_tokens_min +
                                        static_cast<int>(rng.uniform_int(
                                            config.title_tokens_max - config.title_tokens_min + 1));
                    ia.title = make_text(rng, config, n_title, r, 0.0);
                    ia.body = make_text(rng, config, n_body, r, 0.0);
                    if (hard)
                        ia.tags = {pick(rng, config.vocab.sib_tags)};
                    else
                        ia.tags = make_tags(rng, config, tag_rate);
                } else {
                    ia.kind = Kind::Reply;
                    ia.body = make_text(rng, config, n_body, r, 0.0);
                }
            }
            plan.items.push_back(std::move(ia));
        }
    }

    // Flatten chronologically, then resolve reply parents against the global
    // post pool in a deterministic second pass.
    std::vector<Interaction> all;
    GroundTruth truth;
    for (UserPlan& plan : plans) {
        UserTruth ut;
        ut.risk = plan.risk ? 1 : 0;
        if (plan.sib_index) {
            const Interaction& sib = plan.items[*plan.sib_index];
            ut.first_sib_post_id = sib.id;
            ut.first_sib_time = sib.timestamp;
            truth.sib_post_ids.insert(sib.id);
        }
        truth.users[plan.name] = std::move(ut);
        for (Interaction& ia : plan.items) all.push_back(std::move(ia));
    }
    std::sort(all.begin(), all.end(), chrono_less);

    std::vector<std::pair<int64_t, int>> posts;  // (timestamp, index into all)
    for (int i = 0; i < static_cast<int>(all.size()); ++i)
        if (all[i].is_post()) posts.emplace_back(all[i].timestamp, i);
    if (posts.empty())
        throw ValidationError("generator: degenerate config produced a corpus with no posts");

    Rng parent_rng = root.fork("parents");
    for (Interaction& ia : all) {
        if (ia.is_post()) {
            ia.thread_id = ia.id;
            continue;
        }
        // Prefer a post strictly earlier than the reply; fall back to any.
        auto it = std::lower_bound(posts.begin(), posts.end(),
                                   std::make_pair(ia.timestamp, 0),
                                   [](const auto& a, const auto& b) { return a.first < b.first; });
        size_t bound = static_cast<size_t>(it - posts.begin());
        if (bound == 0) bound = posts.size();
        const Interaction& parent = all[posts[parent_rng.uniform_int(bound)].second];
        ia.parent_id = parent.id;
        ia.thread_id = parent.id;
    }

    SynthResult result;
    result.corpus = Corpus::from_interactions(std::move(all));
    result.truth = std::move(truth);

    std::set<std::string> sibtags(config.vocab.sib_tags.begin(), config.vocab.sib_tags.end());
    for (const Interaction* cand : filter_annotation_candidates(result.corpus, sibtags)) {
        PostLabel pl;
        pl.post_id = cand->id;
        pl.label = result.truth.is_sib_post(cand->id) ? SibLabel::Sib : SibLabel::NoSib;
        pl.hard = pl.label == SibLabel::NoSib;
        result.annotations.push_back(std::move(pl));
    }
    return result;
}

double bayes_oracle_rate(const GenConfig& config, int n_mc) {
    config.validate();
    if (n_mc < 2) throw ValidationError("bayes_oracle_rate: n_mc too small");
    const auto [mu, sigma] = fit_history_lognormal(config.history_quantiles, config.max_history);
    const double r0 = config.distress_rate(false), r1 = config.distress_rate(true);
    const double p0 = config.distress_tag_rate(false), p1 = config.distress_tag_rate(true);
    const double tok_pos = std::log(r1 / r0);
    const double tok_neg = std::log((1.0 - r1) / (1.0 - r0));
    const double tag_pos = std::log(p1 / p0);
    const double tag_neg = std::log((1.0 - p1) / (1.0 - p0));

    Rng rng = Rng(config.seed).fork("bayes-oracle");
    long correct[2] = {0, 0};
    long totals[2] = {0, 0};
    for (int s = 0; s < n_mc; ++s) {
        const bool risk = s % 2 == 1;
        const double rate = risk ? r1 : r0;
        const double tag_rate = risk ? p1 : p0;
        const int H = sample_history_len(rng, config, mu, sigma);
        double llr = 0.0;
        for (int j = 0; j < H; ++j) {
            const bool is_post = rng.uniform() >= config.reply_fraction;
            const bool hard = is_post && rng.bernoulli(config.hard_tag_rate);
            int n_tokens = config.body_tokens_min +
                           static_cast<int>(rng.uniform_int(
                               config.body_tokens_max - config.body_tokens_min + 1));
            if (is_post)
                n_tokens += config.title_tokens_min +
                            static_cast<int>(rng.uniform_int(
                                config.title_tokens_max - config.title_tokens_min + 1));
            if (hard) {
                // Hard posts draw at a class-independent rate; they carry no
                // signal, so the likelihood ratio ignores them.
                for (int t = 0; t < n_tokens; ++t) rng.uniform();
                continue;
            }
            for (int t = 0; t < n_tokens; ++t)
                llr += rng.bernoulli(rate) ? tok_pos : tok_neg;
            if (is_post) {
                const int n_tags = static_cast<int>(rng.uniform_int(3));
                for (int t = 0; t < n_tags; ++t)
                    llr += rng.bernoulli(tag_rate) ? tag_pos : tag_neg;
            }
        }
        const int pred = llr > 0.0 ? 1 : 0;
        ++totals[risk ? 1 : 0];
        if (pred == (risk ? 1 : 0)) ++correct[risk ? 1 : 0];
    }
    return 0.5 * (static_cast<double>(correct[0]) / totals[0] +
                  static_cast<double>(correct[1]) / totals[1]);
}

void write_ground_truth(const GroundTruth& truth, const std::string& path) {
    std::ofstream out(path);
    if (!out) throw std::runtime_error("cannot write ground truth file '" + path + "'");
    for (const auto& [user, ut] : truth.users) {
        json j;
        j["user"] = user;
        j["risk"] = ut.risk;
        if (ut.first_sib_post_id) j["first_sib_post_id"] = *ut.first_sib_post_id;
        if (ut.first_sib_time) j["first_sib_time"] = format_utc(*ut.first_sib_time);
        out << j.dump() << "\n";
    }
}

GroundTruth read_ground_truth(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw ValidationError("cannot open ground truth file '" + path + "'");
    GroundTruth truth;
    std::string line;
    size_t lineno = 0;
    while (std::getline(in, line)) {
        ++lineno;
        if (line.empty()) continue;
        try {
            json j = json::parse(line);
            UserTruth ut;
            ut.risk = j.at("risk").get<int>();
            if (j.contains("first_sib_post_id")) {
                ut.first_sib_post_id = j.at("first_sib_post_id").get<std::string>();
                truth.sib_post_ids.insert(*ut.first_sib_post_id);
            }
            if (j.contains("first_sib_time")) {
                auto t = parse_utc(j.at("first_sib_time").get<std::string>());
                if (!t) throw ValidationError("bad first_sib_time");
                ut.first_sib_time = *t;
            }
            truth.users[j.at("user").get<std::string>()] = std::move(ut);
        } catch (const json::exception& e) {
            throw ValidationError(path + ":" + std::to_string(lineno) + ": " + e.what());
        }
    }
    return truth;
}

}  // namespace sib
