#include "sib/corpus.hpp"

#include <algorithm>
#include <fstream>
#include <sstream>

#include <json.hpp>

#include "sib/tokenizer.hpp"

namespace sib {

using nlohmann::json;

bool chrono_less(const Interaction& a, const Interaction& b) {
    if (a.timestamp != b.timestamp) return a.timestamp < b.timestamp;
    return a.id < b.id;
}

const Interaction* Corpus::by_id(const std::string& id) const {
    auto it = by_id_.find(id);
    return it == by_id_.end() ? nullptr : &interactions_[it->second];
}

const Interaction& Corpus::parent_of(const Interaction& reply) const {
    const Interaction* p = by_id(*reply.parent_id);
    if (!p) throw std::logic_error("unresolvable parent for " + reply.id);
    return *p;
}

Corpus Corpus::from_interactions(std::vector<Interaction> interactions) {
    Corpus c;
    c.interactions_ = std::move(interactions);
    for (int i = 0; i < static_cast<int>(c.interactions_.size()); ++i) {
        const Interaction& ia = c.interactions_[i];
        auto [it, inserted] = c.by_id_.emplace(ia.id, i);
        if (!inserted) throw ValidationError("duplicate id '" + ia.id + "'");
        if (ia.is_post()) ++c.post_count_;
    }
    for (int i = 0; i < static_cast<int>(c.interactions_.size()); ++i) {
        const Interaction& ia = c.interactions_[i];
        if (ia.kind == Kind::Reply) {
            const Interaction* parent = c.by_id(*ia.parent_id);
            if (!parent)
                throw ValidationError("dangling parent '" + *ia.parent_id + "' for reply '" +
                                      ia.id + "'");
            if (!parent->is_post())
                throw ValidationError("parent of reply '" + ia.id + "' is not a post");
        }
        c.by_user_[ia.user].push_back(i);
        c.by_thread_[ia.thread_id].push_back(i);
    }
    auto order = [&](int a, int b) { return chrono_less(c.interactions_[a], c.interactions_[b]); };
    for (auto& [user, idxs] : c.by_user_) std::sort(idxs.begin(), idxs.end(), order);
    for (auto& [tid, idxs] : c.by_thread_) std::sort(idxs.begin(), idxs.end(), order);
    return c;
}

namespace {

bool valid_user_token(const std::string& u) {
    if (u.empty()) return false;
    for (unsigned char c : u)
        if (c == '@' || std::isspace(c)) return false;
    return true;
}

Interaction interaction_from_json(const json& j) {
    if (!j.is_object()) throw ValidationError("line is not a JSON object");
    auto require_string = [&](const char* field) -> std::string {
        if (!j.contains(field) || !j.at(field).is_string())
            throw ValidationError(std::string("missing or non-string field '") + field + "'");
        return j.at(field).get<std::string>();
    };
    Interaction ia;
    ia.id = require_string("id");
    ia.user = require_string("user");
    if (!valid_user_token(ia.user))
        throw ValidationError("user '" + ia.user + "' is not an opaque pseudonym token");
    const std::string kind = require_string("kind");
    if (kind == "post")
        ia.kind = Kind::Post;
    else if (kind == "reply")
        ia.kind = Kind::Reply;
    else
        throw ValidationError("kind must be 'post' or 'reply'");
    const std::string ts = require_string("timestamp");
    auto parsed = parse_utc(ts);
    if (!parsed) throw ValidationError("timestamp '" + ts + "' is not a valid UTC instant");
    ia.timestamp = *parsed;
    ia.thread_id = require_string("thread_id");
    ia.body = require_string("body");
    if (ia.kind == Kind::Post) {
        if (!j.contains("title") || !j.at("title").is_string())
            throw ValidationError("post '" + ia.id + "' missing title");
        ia.title = j.at("title").get<std::string>();
        if (j.contains("parent_id") && !j.at("parent_id").is_null())
            throw ValidationError("post '" + ia.id + "' must not carry parent_id");
        if (j.contains("tags")) {
            if (!j.at("tags").is_array()) throw ValidationError("tags must be an array");
            for (const auto& t : j.at("tags")) {
                if (!t.is_string()) throw ValidationError("tags must be strings");
                ia.tags.push_back(t.get<std::string>());
            }
        }
    } else {
        if (j.contains("title") && !j.at("title").is_null())
            throw ValidationError("reply '" + ia.id + "' must not carry a title");
        if (j.contains("tags") && !j.at("tags").is_null() && !j.at("tags").empty())
            throw ValidationError("reply '" + ia.id + "' must not carry tags");
        if (!j.contains("parent_id") || !j.at("parent_id").is_string())
            throw ValidationError("reply '" + ia.id + "' missing parent_id");
        ia.parent_id = j.at("parent_id").get<std::string>();
    }
    return ia;
}

}  // namespace

Corpus parse_corpus_jsonl(std::istream& in, const std::string& origin) {
    std::vector<Interaction> items;
    std::string line;
    size_t lineno = 0;
    while (std::getline(in, line)) {
        ++lineno;
        if (line.empty()) continue;
        json j;
        try {
            j = json::parse(line);
        } catch (const json::exception& e) {
            throw ValidationError(origin + ":" + std::to_string(lineno) +
                                  ": malformed JSON: " + e.what());
        }
        try {
            items.push_back(interaction_from_json(j));
        } catch (const ValidationError& e) {
            throw ValidationError(origin + ":" + std::to_string(lineno) + ": " + e.what());
        }
    }
    return Corpus::from_interactions(std::move(items));
}

Corpus ingest_corpus(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw ValidationError("cannot open corpus file '" + path + "'");
    return parse_corpus_jsonl(in, path);
}

std::string interaction_to_json(const Interaction& ia) {
    json j;
    j["id"] = ia.id;
    j["user"] = ia.user;
    j["kind"] = ia.is_post() ? "post" : "reply";
    j["timestamp"] = format_utc(ia.timestamp);
    j["thread_id"] = ia.thread_id;
    if (ia.is_post()) {
        j["title"] = *ia.title;
        j["tags"] = ia.tags;
    } else {
        j["parent_id"] = *ia.parent_id;
    }
    j["body"] = ia.body;
    return j.dump();
}

void emit_corpus(const Corpus& corpus, const std::string& path) {
    std::ofstream out(path);
    if (!out) throw std::runtime_error("cannot write corpus file '" + path + "'");
    for (const Interaction& ia : corpus.interactions()) out << interaction_to_json(ia) << "\n";
}

std::vector<PostLabel> read_post_labels(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw ValidationError("cannot open labels file '" + path + "'");
    std::vector<PostLabel> out;
    std::string line;
    size_t lineno = 0;
    while (std::getline(in, line)) {
        ++lineno;
        if (line.empty()) continue;
        try {
            json j = json::parse(line);
            PostLabel pl;
            pl.post_id = j.at("post_id").get<std::string>();
            const int lab = j.at("label").get<int>();
            if (lab != 0 && lab != 1) throw ValidationError("label must be 0 or 1");
            pl.label = static_cast<SibLabel>(lab);
            pl.hard = j.value("hard", false);
            if (pl.hard && pl.label == SibLabel::Sib)
                throw ValidationError("hard instances must be labeled No-SIB");
            out.push_back(std::move(pl));
        } catch (const json::exception& e) {
            throw ValidationError(path + ":" + std::to_string(lineno) +
                                  ": malformed label line: " + e.what());
        } catch (const ValidationError& e) {
            throw ValidationError(path + ":" + std::to_string(lineno) + ": " + e.what());
        }
    }
    return out;
}

void write_post_labels(const std::vector<PostLabel>& labels, const std::string& path) {
    std::ofstream out(path);
    if (!out) throw std::runtime_error("cannot write labels file '" + path + "'");
    for (const PostLabel& pl : labels) {
        json j;
        j["post_id"] = pl.post_id;
        j["label"] = static_cast<int>(pl.label);
        j["hard"] = pl.hard;
        out << j.dump() << "\n";
    }
}

const std::set<std::string>& default_sib_tags() {
    static const std::set<std::string> tags = {"zelfmoord",          "zm",
                                               "zelfmoordgedachten", "denken aan zelfmoord",
                                               "suicidaal",          "zelfdoding"};
    return tags;
}

const std::set<std::string>& default_excluded_spans() {
    static const std::set<std::string> spans = {"ik wil niet meer", "dood", "einde aan", "doden"};
    return spans;
}

namespace {

std::string normalize_tag(const std::string& t) { return lowercase(trim(t)); }

std::string searchable_text(const Interaction& ia) {
    std::string s;
    if (ia.title) s += *ia.title;
    s += ' ';
    s += ia.body;
    for (const std::string& t : ia.tags) {
        s += ' ';
        s += t;
    }
    return lowercase(s);
}

}  // namespace

std::vector<const Interaction*> filter_annotation_candidates(const Corpus& corpus,
                                                             const std::set<std::string>& sib_tags) {
    if (sib_tags.empty()) throw ValidationError("sib_tags must not be empty");
    std::set<std::string> wanted;
    for (const std::string& t : sib_tags) wanted.insert(normalize_tag(t));
    std::vector<const Interaction*> out;
    for (const Interaction& ia : corpus.interactions()) {
        if (!ia.is_post()) continue;
        for (const std::string& t : ia.tags) {
            if (wanted.count(normalize_tag(t))) {
                out.push_back(&ia);
                break;
            }
        }
    }
    std::sort(out.begin(), out.end(),
              [](const Interaction* a, const Interaction* b) { return chrono_less(*a, *b); });
    return out;
}

std::vector<const Interaction*> sample_negatives(const Corpus& corpus, size_t n,
                                                 const std::set<std::string>& excluded_tags,
                                                 const std::set<std::string>& excluded_spans,
                                                 uint64_t seed) {
    std::set<std::string> tagset;
    for (const std::string& t : excluded_tags) tagset.insert(normalize_tag(t));
    std::vector<std::string> spans;
    for (const std::string& s : excluded_spans) spans.push_back(lowercase(s));

    std::vector<const Interaction*> pool;
    for (const Interaction& ia : corpus.interactions()) {
        if (!ia.is_post()) continue;
        bool excluded = false;
        for (const std::string& t : ia.tags)
            if (tagset.count(normalize_tag(t))) {
                excluded = true;
                break;
            }
        if (!excluded) {
            const std::string text = searchable_text(ia);
            for (const std::string& s : spans)
                if (text.find(s) != std::string::npos) {
                    excluded = true;
                    break;
                }
        }
        if (!excluded) pool.push_back(&ia);
    }
    std::sort(pool.begin(), pool.end(),
              [](const Interaction* a, const Interaction* b) { return chrono_less(*a, *b); });
    if (n > pool.size())
        throw ValidationError("sample_negatives: requested " + std::to_string(n) +
                              " posts but eligible pool has only " + std::to_string(pool.size()));
    Rng rng(seed);
    for (size_t i = 0; i < n; ++i) {
        size_t j = i + rng.uniform_int(pool.size() - i);
        std::swap(pool[i], pool[j]);
    }
    pool.resize(n);
    std::sort(pool.begin(), pool.end(),
              [](const Interaction* a, const Interaction* b) { return chrono_less(*a, *b); });
    return pool;
}

double cohens_kappa(const std::vector<int>& labels_a, const std::vector<int>& labels_b) {
    if (labels_a.empty()) throw ValidationError("cohens_kappa: empty input");
    if (labels_a.size() != labels_b.size())
        throw ValidationError("cohens_kappa: length mismatch");
    double n11 = 0, n10 = 0, n01 = 0, n00 = 0;
    for (size_t i = 0; i < labels_a.size(); ++i) {
        const int a = labels_a[i], b = labels_b[i];
        if ((a != 0 && a != 1) || (b != 0 && b != 1))
            throw ValidationError("cohens_kappa: labels must be binary");
        if (a == 1 && b == 1)
            ++n11;
        else if (a == 1)
            ++n10;
        else if (b == 1)
            ++n01;
        else
            ++n00;
    }
    const double n = static_cast<double>(labels_a.size());
    const double po = (n11 + n00) / n;
    const double a1 = (n11 + n10) / n, b1 = (n11 + n01) / n;
    const double pe = a1 * b1 + (1.0 - a1) * (1.0 - b1);
    if (pe >= 1.0 - 1e-12) return po >= 1.0 - 1e-12 ? 1.0 : 0.0;
    return (po - pe) / (1.0 - pe);
}

}  // namespace sib
