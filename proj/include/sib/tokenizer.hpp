#pragma once

#include <cctype>
#include <string>
#include <string_view>
#include <vector>

#include "sib/rng.hpp"

namespace sib {

// Reserved token ids; hashed word ids start at kFirstWordId.
constexpr int kPadId = 0;
constexpr int kClsId = 1;
constexpr int kSepId = 2;
constexpr int kFirstWordId = 3;

// Deterministic lowercasing word splitter with FNV-1a hashing into a fixed
// vocabulary. Alphanumeric runs form words; bytes >= 0x80 are treated as
// word characters so UTF-8 text stays intact.
class Tokenizer {
public:
    explicit Tokenizer(int vocab_size) : vocab_(vocab_size) {}

    int vocab_size() const { return vocab_; }
    // Total embedding rows including the reserved ids.
    int table_size() const { return vocab_ + kFirstWordId; }

    std::vector<int> tokenize(std::string_view text) const {
        std::vector<int> ids;
        std::string word;
        auto flush = [&] {
            if (!word.empty()) {
                ids.push_back(kFirstWordId + static_cast<int>(fnv1a64(word) % static_cast<uint64_t>(vocab_)));
                word.clear();
            }
        };
        for (unsigned char c : text) {
            if (std::isalnum(c) || c >= 0x80) {
                word.push_back(static_cast<char>(std::tolower(c)));
            } else {
                flush();
            }
        }
        flush();
        return ids;
    }

private:
    int vocab_;
};

inline std::string lowercase(std::string_view s) {
    std::string out(s);
    for (char& c : out) c = static_cast<char>(std::tolower(static_cast<unsigned char>(c)));
    return out;
}

inline std::string trim(std::string_view s) {
    size_t b = 0, e = s.size();
    while (b < e && std::isspace(static_cast<unsigned char>(s[b]))) ++b;
    while (e > b && std::isspace(static_cast<unsigned char>(s[e - 1]))) --e;
    return std::string(s.substr(b, e - b));
}

}  // namespace sib
