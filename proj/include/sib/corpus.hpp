#pragma once

#include <cstdint>
#include <iosfwd>
#include <map>
#include <optional>
#include <set>
#include <stdexcept>
#include <string>
#include <unordered_map>
#include <vector>

#include "sib/rng.hpp"
#include "sib/timeutil.hpp"

namespace sib {

// Thrown for malformed inputs and violated preconditions; mapped to exit
// code 1 by the CLI.
class ValidationError : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

enum class Kind { Post, Reply };

// One forum post or reply.
struct Interaction {
    std::string id;
    std::string user;
    Kind kind = Kind::Post;
    int64_t timestamp = 0;  // UTC epoch seconds
    std::string thread_id;
    std::optional<std::string> title;  // present iff kind == Post
    std::string body;
    std::vector<std::string> tags;          // posts only
    std::optional<std::string> parent_id;   // present iff kind == Reply

    bool is_post() const { return kind == Kind::Post; }
};

enum class SibLabel : int { NoSib = 0, Sib = 1 };

struct PostLabel {
    std::string post_id;
    SibLabel label = SibLabel::NoSib;
    bool hard = false;  // No-SIB post containing suicide-related language
};

// Immutable after ingestion; concurrent reads are safe.
class Corpus {
public:
    static Corpus from_interactions(std::vector<Interaction> interactions);

    const std::vector<Interaction>& interactions() const { return interactions_; }
    const Interaction* by_id(const std::string& id) const;
    const Interaction& parent_of(const Interaction& reply) const;

    // Interaction indexes per user, ascending (timestamp, id).
    const std::map<std::string, std::vector<int>>& by_user() const { return by_user_; }
    const std::map<std::string, std::vector<int>>& by_thread() const { return by_thread_; }

    size_t size() const { return interactions_.size(); }
    size_t post_count() const { return post_count_; }

private:
    std::vector<Interaction> interactions_;
    std::unordered_map<std::string, int> by_id_;
    std::map<std::string, std::vector<int>> by_user_;
    std::map<std::string, std::vector<int>> by_thread_;
    size_t post_count_ = 0;
};

// Chronological order used everywhere: timestamp, ties broken by id.
bool chrono_less(const Interaction& a, const Interaction& b);

Corpus ingest_corpus(const std::string& path);
Corpus parse_corpus_jsonl(std::istream& in, const std::string& origin);
void emit_corpus(const Corpus& corpus, const std::string& path);
std::string interaction_to_json(const Interaction& ia);

std::vector<PostLabel> read_post_labels(const std::string& path);
void write_post_labels(const std::vector<PostLabel>& labels, const std::string& path);

// Dutch forum tags marking candidate SIB posts, and the spans additionally
// excluded when sampling negatives.
const std::set<std::string>& default_sib_tags();
const std::set<std::string>& default_excluded_spans();

// Posts whose normalized tags intersect sib_tags, chronological.
std::vector<const Interaction*> filter_annotation_candidates(const Corpus& corpus,
                                                             const std::set<std::string>& sib_tags);

// Seeded uniform sample (without replacement) of posts free of the excluded
// tags (exact match after normalization) and spans (case-insensitive
// substring over title+body+tags).
std::vector<const Interaction*> sample_negatives(const Corpus& corpus, size_t n,
                                                 const std::set<std::string>& excluded_tags,
                                                 const std::set<std::string>& excluded_spans,
                                                 uint64_t seed);

double cohens_kappa(const std::vector<int>& labels_a, const std::vector<int>& labels_b);

}  // namespace sib
