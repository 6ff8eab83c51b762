#pragma once

#include <optional>
#include <string>
#include <vector>

#include "sib/earlysib.hpp"
#include "sib/userset.hpp"

namespace sib {

enum class ShapMethod { Exact, Sampled };

// Per-interaction Shapley attribution toward the class-1 probability.
struct Explanation {
    std::string user;
    std::vector<ContextItem> items;  // the explained context, chronological
    std::vector<double> phi;
    double base_value = 0.0;  // f(empty context)
    double fx = 0.0;          // f(full context)
    ShapMethod method = ShapMethod::Exact;
    int sample_m = 0;
    uint64_t sample_seed = 0;
};

struct ComplexityScore {
    double entropy = 0.0;  // in [0,1]
    bool defined = false;  // false when |context| <= 1 or all phi are zero
};

struct LeadTimeStat {
    std::string most_predictive;
    long days_before_sib = 0;
};

// Class-1 probability of the sub-context selected by `mask`, chronological
// order preserved; the masked-out interactions are removed outright, from the
// recurrent sequence and from the title+tag string alike.
double coalition_value(const EarlySibModel& model, const std::vector<ContextItem>& context,
                       const std::vector<bool>& mask);

// Exact Shapley values by subset enumeration; |context| <= 12.
Explanation shapley_exact(const EarlySibModel& model, const std::vector<ContextItem>& context,
                          const std::string& user = "");

// Antithetic permutation-sampling estimate with m >= 100 permutations; phi is
// shifted additively so efficiency holds exactly.
Explanation shapley_sampled(const EarlySibModel& model, const std::vector<ContextItem>& context,
                            int m, uint64_t seed, const std::string& user = "");

// Exact up to `exact_max` interactions, sampled beyond.
struct ShapParams {
    int exact_max = 12;
    int sample_m = 2000;
    uint64_t seed = 42;
};
Explanation explain_context(const EarlySibModel& model, const std::vector<ContextItem>& context,
                            const ShapParams& params, const std::string& user = "");

// Normalized Shannon entropy of the absolute attribution distribution.
ComplexityScore complexity(const Explanation& expl);

// Most predictive interaction (max signed phi toward class 1, or max |phi|
// with use_abs) and whole days between it and the first SIB post.
LeadTimeStat lead_time(const Explanation& expl, const UserRecord& record, bool use_abs = false);

// CSV + SVG waterfall at out_path_base{.csv,.svg}; bars ordered by |phi|
// ascending so the running sum walks base -> fx.
void render_waterfall(const Explanation& expl, const std::string& out_path_base);

struct ExplanationRow {
    Explanation expl;
    ComplexityScore score;
    std::optional<LeadTimeStat> lead;
};

void write_explanations_jsonl(const std::vector<ExplanationRow>& rows, const std::string& path);

// Fig-5/Fig-6 style inputs: complexity histogram (0.1 bins) and lead-time
// histogram (10-day bins).
void write_cohort_summary_csv(const std::vector<ExplanationRow>& rows, const std::string& path);
std::vector<long> complexity_histogram(const std::vector<ExplanationRow>& rows);
std::vector<long> lead_time_histogram(const std::vector<ExplanationRow>& rows, int bin_days = 10);

}  // namespace sib
