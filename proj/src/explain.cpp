#include "sib/explain.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <unordered_map>

#include <json.hpp>

#include "sib/report.hpp"

namespace sib {

using nlohmann::json;

double coalition_value(const EarlySibModel& model, const std::vector<ContextItem>& context,
                       const std::vector<bool>& mask) {
    if (mask.size() != context.size())
        throw ValidationError("coalition_value: mask length mismatch");
    std::vector<ContextItem> subset;
    for (size_t i = 0; i < context.size(); ++i)
        if (mask[i]) subset.push_back(context[i]);
    return model.forward(subset).probability_sib;
}

namespace {

// v(S) over cached per-interaction encodings; the title+tag string is rebuilt
// from the masked-in subset on every call.
class CoalitionEvaluator {
public:
    CoalitionEvaluator(const EarlySibModel& model, const std::vector<ContextItem>& context)
        : model_(model), encoded_(model.encode_items(context)) {}

    double value(uint64_t mask) {
        auto it = memo_.find(mask);
        if (it != memo_.end()) return it->second;
        std::vector<const EncodedItem*> subset;
        for (size_t i = 0; i < encoded_.size(); ++i)
            if (mask & (uint64_t{1} << i)) subset.push_back(&encoded_[i]);
        const double v = model_.forward_encoded(subset).probability_sib;
        memo_.emplace(mask, v);
        return v;
    }

private:
    const EarlySibModel& model_;
    std::vector<EncodedItem> encoded_;
    std::unordered_map<uint64_t, double> memo_;
};

}  // namespace

Explanation shapley_exact(const EarlySibModel& model, const std::vector<ContextItem>& context,
                          const std::string& user) {
    const int n = static_cast<int>(context.size());
    if (n > 12)
        throw ValidationError("shapley_exact: context of " + std::to_string(n) +
                              " interactions exceeds the 2^n enumeration bound (12)");
    Explanation expl;
    expl.user = user;
    expl.items = context;
    expl.method = ShapMethod::Exact;
    CoalitionEvaluator eval(model, context);
    const uint64_t full = n == 0 ? 0 : (uint64_t{1} << n) - 1;
    expl.base_value = eval.value(0);
    expl.fx = eval.value(full);
    expl.phi.assign(static_cast<size_t>(n), 0.0);
    if (n == 0) return expl;

    std::vector<double> fact(static_cast<size_t>(n) + 1, 1.0);
    for (int i = 1; i <= n; ++i) fact[static_cast<size_t>(i)] = fact[static_cast<size_t>(i - 1)] * i;
    std::vector<double> weight(static_cast<size_t>(n), 0.0);
    for (int s = 0; s < n; ++s)
        weight[static_cast<size_t>(s)] =
            fact[static_cast<size_t>(s)] * fact[static_cast<size_t>(n - 1 - s)] / fact[static_cast<size_t>(n)];

    for (uint64_t mask = 0; mask <= full; ++mask) {
        const int s = static_cast<int>(__builtin_popcountll(mask));
        for (int i = 0; i < n; ++i) {
            if (mask & (uint64_t{1} << i)) continue;
            expl.phi[static_cast<size_t>(i)] +=
                weight[static_cast<size_t>(s)] *
                (eval.value(mask | (uint64_t{1} << i)) - eval.value(mask));
        }
    }
    return expl;
}

Explanation shapley_sampled(const EarlySibModel& model, const std::vector<ContextItem>& context,
                            int m, uint64_t seed, const std::string& user) {
    if (m < 100) throw ValidationError("shapley_sampled: m must be >= 100");
    const int n = static_cast<int>(context.size());
    Explanation expl;
    expl.user = user;
    expl.items = context;
    expl.method = ShapMethod::Sampled;
    expl.sample_m = m;
    expl.sample_seed = seed;
    CoalitionEvaluator eval(model, context);
    const uint64_t full = n == 0 ? 0 : (uint64_t{1} << n) - 1;
    expl.base_value = eval.value(0);
    expl.fx = eval.value(full);
    expl.phi.assign(static_cast<size_t>(n), 0.0);
    if (n == 0) return expl;

    Rng rng = Rng(seed).fork("shapley");
    std::vector<int> perm(static_cast<size_t>(n));
    for (int i = 0; i < n; ++i) perm[static_cast<size_t>(i)] = i;
    auto walk = [&](const std::vector<int>& order) {
        uint64_t mask = 0;
        double prev = expl.base_value;
        for (int idx : order) {
            mask |= uint64_t{1} << idx;
            const double cur = eval.value(mask);
            expl.phi[static_cast<size_t>(idx)] += cur - prev;
            prev = cur;
        }
    };
    int done = 0;
    while (done < m) {
        rng.shuffle(perm);
        walk(perm);
        ++done;
        if (done < m) {
            // Antithetic companion: the reversed permutation.
            std::vector<int> rev(perm.rbegin(), perm.rend());
            walk(rev);
            ++done;
        }
    }
    for (double& p : expl.phi) p /= static_cast<double>(m);
    // Additive shift so efficiency holds exactly.
    double sum = 0.0;
    for (double p : expl.phi) sum += p;
    const double shift = (expl.fx - expl.base_value - sum) / static_cast<double>(n);
    for (double& p : expl.phi) p += shift;
    return expl;
}

Explanation explain_context(const EarlySibModel& model, const std::vector<ContextItem>& context,
                            const ShapParams& params, const std::string& user) {
    if (static_cast<int>(context.size()) <= params.exact_max)
        return shapley_exact(model, context, user);
    return shapley_sampled(model, context, params.sample_m, params.seed, user);
}

ComplexityScore complexity(const Explanation& expl) {
    ComplexityScore score;
    const size_t n = expl.phi.size();
    if (n <= 1) return score;
    double total = 0.0;
    for (double p : expl.phi) total += std::abs(p);
    if (total <= 0.0) return score;
    double h = 0.0;
    for (double p : expl.phi) {
        const double q = std::abs(p) / total;
        if (q > 0.0) h -= q * std::log(q);
    }
    score.entropy = h / std::log(static_cast<double>(n));
    score.defined = true;
    return score;
}

LeadTimeStat lead_time(const Explanation& expl, const UserRecord& record, bool use_abs) {
    if (record.label != 1 || !record.first_sib_time)
        throw ValidationError("lead_time: defined only for label-1 users with a first SIB time");
    if (expl.items.empty()) throw ValidationError("lead_time: empty explanation");
    size_t best = 0;
    auto key = [&](size_t i) { return use_abs ? std::abs(expl.phi[i]) : expl.phi[i]; };
    for (size_t i = 1; i < expl.items.size(); ++i) {
        const double a = key(i), b = key(best);
        if (a > b) {
            best = i;
        } else if (a == b) {
            // Tie: prefer the most recent interaction.
            const Interaction* ia = expl.items[i].interaction;
            const Interaction* ib = expl.items[best].interaction;
            if (chrono_less(*ib, *ia)) best = i;
        }
    }
    LeadTimeStat stat;
    stat.most_predictive = expl.items[best].interaction->id;
    stat.days_before_sib = static_cast<long>(
        (*record.first_sib_time - expl.items[best].interaction->timestamp) / kSecondsPerDay);
    return stat;
}

namespace {

std::string snippet_of(const ContextItem& item) {
    const Interaction& ia = *item.interaction;
    std::string s = ia.is_post() && ia.title ? *ia.title : ia.body;
    if (s.size() > 40) s = s.substr(0, 37) + "...";
    return s;
}

std::string csv_escape(const std::string& s) {
    if (s.find_first_of(",\"\n") == std::string::npos) return s;
    std::string out = "\"";
    for (char c : s) {
        if (c == '"') out += '"';
        out += c;
    }
    out += '"';
    return out;
}

}  // namespace

void render_waterfall(const Explanation& expl, const std::string& out_path_base) {
    std::vector<size_t> order(expl.phi.size());
    for (size_t i = 0; i < order.size(); ++i) order[i] = i;
    std::sort(order.begin(), order.end(), [&](size_t a, size_t b) {
        return std::abs(expl.phi[a]) < std::abs(expl.phi[b]);
    });

    std::ofstream csv(out_path_base + ".csv");
    if (!csv) throw std::runtime_error("cannot write waterfall csv '" + out_path_base + ".csv'");
    csv << "interaction_id,kind,title_or_snippet,phi\n";
    std::vector<WaterfallBar> bars;
    for (size_t i : order) {
        const ContextItem& item = expl.items[i];
        csv << item.interaction->id << ',' << (item.is_post() ? "post" : "reply") << ','
            << csv_escape(snippet_of(item)) << ',' << format_double(expl.phi[i]) << "\n";
        bars.push_back({(item.is_post() ? "P: " : "R: ") + snippet_of(item), expl.phi[i]});
    }
    svg_waterfall(out_path_base + ".svg", expl.base_value, expl.fx, bars);
}

void write_explanations_jsonl(const std::vector<ExplanationRow>& rows, const std::string& path) {
    std::ofstream out(path);
    if (!out) throw std::runtime_error("cannot write explanations '" + path + "'");
    for (const ExplanationRow& row : rows) {
        json j;
        j["user"] = row.expl.user;
        json ids = json::array();
        for (const ContextItem& item : row.expl.items) ids.push_back(item.interaction->id);
        j["interactions"] = ids;
        j["phi"] = row.expl.phi;
        j["base_value"] = row.expl.base_value;
        j["fx"] = row.expl.fx;
        if (row.expl.method == ShapMethod::Exact) {
            j["method"] = {{"kind", "exact"}};
        } else {
            j["method"] = {{"kind", "sampled"}, {"m", row.expl.sample_m},
                           {"seed", row.expl.sample_seed}};
        }
        j["complexity"] = {{"entropy", row.score.entropy}, {"defined", row.score.defined}};
        if (row.lead)
            j["lead_time"] = {{"most_predictive", row.lead->most_predictive},
                              {"days_before_sib", row.lead->days_before_sib}};
        out << j.dump() << "\n";
    }
}

void write_cohort_summary_csv(const std::vector<ExplanationRow>& rows, const std::string& path) {
    std::ofstream out(path);
    if (!out) throw std::runtime_error("cannot write cohort summary '" + path + "'");
    out << "user,n_interactions,fx,base_value,complexity_defined,complexity,"
           "most_predictive,days_before_sib\n";
    for (const ExplanationRow& row : rows) {
        out << row.expl.user << ',' << row.expl.items.size() << ',' << format_double(row.expl.fx)
            << ',' << format_double(row.expl.base_value) << ',' << (row.score.defined ? 1 : 0)
            << ',';
        if (row.score.defined) out << format_double(row.score.entropy);
        out << ',';
        if (row.lead) out << row.lead->most_predictive;
        out << ',';
        if (row.lead) out << row.lead->days_before_sib;
        out << "\n";
    }
}

std::vector<long> complexity_histogram(const std::vector<ExplanationRow>& rows) {
    std::vector<long> bins(10, 0);
    for (const ExplanationRow& row : rows) {
        if (!row.score.defined) continue;
        int b = static_cast<int>(row.score.entropy * 10.0);
        if (b > 9) b = 9;
        if (b < 0) b = 0;
        ++bins[static_cast<size_t>(b)];
    }
    return bins;
}

std::vector<long> lead_time_histogram(const std::vector<ExplanationRow>& rows, int bin_days) {
    long maxday = 0;
    for (const ExplanationRow& row : rows)
        if (row.lead) maxday = std::max(maxday, row.lead->days_before_sib);
    std::vector<long> bins(static_cast<size_t>(maxday / bin_days) + 1, 0);
    for (const ExplanationRow& row : rows)
        if (row.lead) ++bins[static_cast<size_t>(row.lead->days_before_sib / bin_days)];
    return bins;
}

}  // namespace sib
