#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <cstdio>
#include <fstream>
#include <sstream>

#include "sib/corpus.hpp"
#include "sib/timeutil.hpp"

using namespace sib;

namespace {

std::string post_line(const std::string& id, const std::string& user, const std::string& ts,
                      const std::string& title, const std::string& body,
                      const std::string& tags_json = "[]") {
    return "{\"id\":\"" + id + "\",\"user\":\"" + user + "\",\"kind\":\"post\",\"timestamp\":\"" +
           ts + "\",\"thread_id\":\"" + id + "\",\"title\":\"" + title + "\",\"tags\":" +
           tags_json + ",\"body\":\"" + body + "\"}";
}

std::string reply_line(const std::string& id, const std::string& user, const std::string& ts,
                       const std::string& parent, const std::string& body) {
    return "{\"id\":\"" + id + "\",\"user\":\"" + user + "\",\"kind\":\"reply\",\"timestamp\":\"" +
           ts + "\",\"thread_id\":\"" + parent + "\",\"parent_id\":\"" + parent +
           "\",\"body\":\"" + body + "\"}";
}

Corpus from_lines(const std::vector<std::string>& lines) {
    std::stringstream ss;
    for (const auto& l : lines) ss << l << "\n";
    return parse_corpus_jsonl(ss, "<mem>");
}

}  // namespace

TEST_CASE("timestamp parse and format round trip") {
    auto t = parse_utc("2024-03-01T12:30:05Z");
    REQUIRE(t.has_value());
    CHECK(format_utc(*t) == "2024-03-01T12:30:05Z");
    CHECK(parse_utc("2024-02-29T00:00:00Z").has_value());   // leap day
    CHECK(!parse_utc("2023-02-29T00:00:00Z").has_value());
    CHECK(!parse_utc("2024-03-01T12:30:05").has_value());
    CHECK(!parse_utc("2024-03-01 12:30:05Z").has_value());
    CHECK(!parse_utc("2024-13-01T00:00:00Z").has_value());
    CHECK(*parse_utc("1970-01-01T00:00:00Z") == 0);
    CHECK(*parse_utc("1970-01-02T00:00:00Z") == 86400);
}

TEST_CASE("empty file yields empty corpus") {
    Corpus c = from_lines({});
    CHECK(c.size() == 0);
    CHECK(c.post_count() == 0);
}

TEST_CASE("three-line corpus builds indexes") {
    Corpus c = from_lines({
        post_line("p1", "alice", "2024-01-01T10:00:00Z", "hi", "hello world"),
        reply_line("r1", "bob", "2024-01-01T11:00:00Z", "p1", "welcome"),
        reply_line("r2", "carol", "2024-01-01T12:00:00Z", "p1", "hey"),
    });
    CHECK(c.size() == 3);
    CHECK(c.post_count() == 1);
    CHECK(c.by_thread().size() == 1);
    CHECK(c.by_thread().at("p1").size() == 3);
    CHECK(c.by_user().size() == 3);
    CHECK(c.by_user().at("alice").size() == 1);
    CHECK(c.parent_of(*c.by_id("r1")).id == "p1");
}

TEST_CASE("per-user index is chronological with id tie break") {
    Corpus c = from_lines({
        post_line("b", "u", "2024-01-01T10:00:00Z", "t2", "x"),
        post_line("a", "u", "2024-01-01T10:00:00Z", "t1", "x"),
        post_line("c", "u", "2024-01-01T09:00:00Z", "t0", "x"),
    });
    const auto& idx = c.by_user().at("u");
    CHECK(c.interactions()[idx[0]].id == "c");
    CHECK(c.interactions()[idx[1]].id == "a");
    CHECK(c.interactions()[idx[2]].id == "b");
}

TEST_CASE("validation failures carry line numbers") {
    CHECK_THROWS_WITH_AS(from_lines({"{not json"}),
                         doctest::Contains("<mem>:1"), ValidationError);
    CHECK_THROWS_WITH_AS(from_lines({post_line("p1", "u", "2024-01-01T10:00:00Z", "t", "b"),
                                     "{\"id\":\"x\"}"}),
                         doctest::Contains("<mem>:2"), ValidationError);
    // dangling parent
    CHECK_THROWS_WITH_AS(from_lines({reply_line("r1", "u", "2024-01-01T10:00:00Z", "nope", "b")}),
                         doctest::Contains("dangling parent"), ValidationError);
    // duplicate id
    CHECK_THROWS_AS(from_lines({post_line("p1", "u", "2024-01-01T10:00:00Z", "t", "b"),
                                post_line("p1", "u", "2024-01-01T11:00:00Z", "t", "b")}),
                    ValidationError);
    // reply with tags/title is rejected
    CHECK_THROWS_AS(
        from_lines({post_line("p1", "u", "2024-01-01T10:00:00Z", "t", "b"),
                    "{\"id\":\"r1\",\"user\":\"u\",\"kind\":\"reply\",\"timestamp\":"
                    "\"2024-01-01T11:00:00Z\",\"thread_id\":\"p1\",\"parent_id\":\"p1\","
                    "\"title\":\"no\",\"body\":\"b\"}"}),
        ValidationError);
    // post with parent_id is rejected
    CHECK_THROWS_AS(
        from_lines({"{\"id\":\"p2\",\"user\":\"u\",\"kind\":\"post\",\"timestamp\":"
                    "\"2024-01-01T11:00:00Z\",\"thread_id\":\"p2\",\"title\":\"t\",\"tags\":[],"
                    "\"parent_id\":\"p1\",\"body\":\"b\"}"}),
        ValidationError);
    // user tokens must be opaque
    CHECK_THROWS_AS(from_lines({post_line("p1", "a b", "2024-01-01T10:00:00Z", "t", "b")}),
                    ValidationError);
    CHECK_THROWS_AS(from_lines({post_line("p1", "a@b", "2024-01-01T10:00:00Z", "t", "b")}),
                    ValidationError);
    // reply to a reply is rejected
    CHECK_THROWS_AS(from_lines({post_line("p1", "u", "2024-01-01T10:00:00Z", "t", "b"),
                                reply_line("r1", "u", "2024-01-01T11:00:00Z", "p1", "b"),
                                reply_line("r2", "u", "2024-01-01T12:00:00Z", "r1", "b")}),
                    ValidationError);
}

TEST_CASE("jsonl round trip is identity on interactions") {
    Corpus c = from_lines({
        post_line("p1", "alice", "2024-01-01T10:00:00Z", "School stress", "life is hard",
                  "[\"school\",\"stress\"]"),
        reply_line("r1", "bob", "2024-01-02T11:00:00Z", "p1", "hang in there"),
    });
    const std::string path = "roundtrip_test.jsonl";
    emit_corpus(c, path);
    Corpus c2 = ingest_corpus(path);
    std::remove(path.c_str());
    REQUIRE(c2.size() == c.size());
    for (size_t i = 0; i < c.size(); ++i) {
        const Interaction &a = c.interactions()[i], &b = c2.interactions()[i];
        CHECK(a.id == b.id);
        CHECK(a.user == b.user);
        CHECK(a.kind == b.kind);
        CHECK(a.timestamp == b.timestamp);
        CHECK(a.thread_id == b.thread_id);
        CHECK(a.title == b.title);
        CHECK(a.body == b.body);
        CHECK(a.tags == b.tags);
        CHECK(a.parent_id == b.parent_id);
    }
}

TEST_CASE("filter_annotation_candidates matches normalized tags") {
    std::vector<std::string> lines;
    for (int i = 0; i < 7; ++i)
        lines.push_back(post_line("zm" + std::to_string(i), "u" + std::to_string(i),
                                  "2024-01-0" + std::to_string(i + 1) + "T10:00:00Z", "t", "b",
                                  "[\"zm\"]"));
    lines.push_back(post_line("clean", "u9", "2024-01-09T10:00:00Z", "t", "b", "[\"school\"]"));
    Corpus c = from_lines(lines);

    auto hits = filter_annotation_candidates(c, default_sib_tags());
    CHECK(hits.size() == 7);
    for (size_t i = 1; i < hits.size(); ++i) CHECK(hits[i - 1]->timestamp <= hits[i]->timestamp);

    // case/whitespace-normalized match
    Corpus c2 = from_lines({post_line("p", "u", "2024-01-01T10:00:00Z", "t", "b", "[\"ZM \"]")});
    CHECK(filter_annotation_candidates(c2, default_sib_tags()).size() == 1);

    Corpus none = from_lines({post_line("p", "u", "2024-01-01T10:00:00Z", "t", "b")});
    CHECK(filter_annotation_candidates(none, default_sib_tags()).empty());
}

TEST_CASE("sample_negatives excludes tags and spans") {
    std::vector<std::string> lines;
    // 4 posts containing an excluded span, 6 clean ones.
    for (int i = 0; i < 4; ++i)
        lines.push_back(post_line("bad" + std::to_string(i), "u" + std::to_string(i),
                                  "2024-01-01T10:00:0" + std::to_string(i) + "Z", "t",
                                  i % 2 ? "ben doodmoe vandaag" : "het is een Einde Aan iets"));
    for (int i = 0; i < 6; ++i)
        lines.push_back(post_line("ok" + std::to_string(i), "v" + std::to_string(i),
                                  "2024-01-02T10:00:0" + std::to_string(i) + "Z", "fine", "prima"));
    Corpus c = from_lines(lines);

    auto sel = sample_negatives(c, 6, default_sib_tags(), default_excluded_spans(), 1);
    CHECK(sel.size() == 6);
    for (const Interaction* ia : sel) CHECK(ia->id.substr(0, 2) == "ok");

    CHECK(sample_negatives(c, 0, default_sib_tags(), default_excluded_spans(), 1).empty());
    CHECK_THROWS_WITH_AS(
        sample_negatives(c, 7, default_sib_tags(), default_excluded_spans(), 1),
        doctest::Contains("pool has only 6"), ValidationError);

    // determinism
    auto s1 = sample_negatives(c, 3, default_sib_tags(), default_excluded_spans(), 99);
    auto s2 = sample_negatives(c, 3, default_sib_tags(), default_excluded_spans(), 99);
    REQUIRE(s1.size() == s2.size());
    for (size_t i = 0; i < s1.size(); ++i) CHECK(s1[i]->id == s2[i]->id);

    // span matching also covers tags; tag matching is exact
    Corpus c3 = from_lines({post_line("p1", "u", "2024-01-01T10:00:00Z", "t", "b",
                                      "[\"dood gewoon\"]"),
                            post_line("p2", "u2", "2024-01-01T11:00:00Z", "t", "b")});
    auto s3 = sample_negatives(c3, 1, default_sib_tags(), default_excluded_spans(), 1);
    REQUIRE(s3.size() == 1);
    CHECK(s3[0]->id == "p2");
}

TEST_CASE("candidates and negatives are disjoint when sib tags are excluded") {
    std::vector<std::string> lines;
    for (int i = 0; i < 12; ++i) {
        const bool tagged = i % 3 == 0;
        lines.push_back(post_line("p" + std::to_string(i), "u" + std::to_string(i),
                                  "2024-01-01T10:00:" + std::string(i < 10 ? "0" : "") +
                                      std::to_string(i) + "Z",
                                  "t", "neutral body", tagged ? "[\"zelfmoord\"]" : "[]"));
    }
    Corpus c = from_lines(lines);
    auto cand = filter_annotation_candidates(c, default_sib_tags());
    auto neg = sample_negatives(c, 8, default_sib_tags(), default_excluded_spans(), 5);
    for (const Interaction* a : cand)
        for (const Interaction* b : neg) CHECK(a->id != b->id);
}

TEST_CASE("cohens kappa") {
    // perfect agreement
    CHECK(cohens_kappa({1, 0, 1, 0}, {1, 0, 1, 0}) == doctest::Approx(1.0));
    // hand-computed: 40/10/10/40 -> po=0.8, pe=0.5, kappa=0.6
    std::vector<int> a, b;
    for (int i = 0; i < 40; ++i) { a.push_back(1); b.push_back(1); }
    for (int i = 0; i < 10; ++i) { a.push_back(1); b.push_back(0); }
    for (int i = 0; i < 10; ++i) { a.push_back(0); b.push_back(1); }
    for (int i = 0; i < 40; ++i) { a.push_back(0); b.push_back(0); }
    CHECK(cohens_kappa(a, b) == doctest::Approx(0.6));
    // one rater constant, other balanced -> 0
    CHECK(cohens_kappa({1, 1, 1, 1}, {1, 0, 1, 0}) == doctest::Approx(0.0));
    // symmetric
    CHECK(cohens_kappa(a, b) == doctest::Approx(cohens_kappa(b, a)));
    // errors
    CHECK_THROWS_AS(cohens_kappa({}, {}), ValidationError);
    CHECK_THROWS_AS(cohens_kappa({1, 0}, {1}), ValidationError);
    CHECK_THROWS_AS(cohens_kappa({2, 0}, {1, 0}), ValidationError);
}
