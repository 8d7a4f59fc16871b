#pragma once

#include <string>
#include <string_view>
#include <vector>

#include "loralab/error.hpp"

namespace loralab {

// Byte-level tokenizer: ids 0..255 are raw bytes, followed by two reserved
// ids. kSep separates prompt from completion, kEos terminates a completion.
// Round-trip identity holds for every byte string; reserved ids never appear
// in tokenized payloads.
class Tokenizer {
public:
    static constexpr int kSep = 256;
    static constexpr int kEos = 257;
    static constexpr std::size_t kVocabSize = 258;

    static std::vector<int> tokenize(std::string_view text) {
        std::vector<int> ids;
        ids.reserve(text.size());
        for (unsigned char c : text) ids.push_back(static_cast<int>(c));
        return ids;
    }

    static std::string detokenize(const std::vector<int>& ids) {
        std::string out;
        out.reserve(ids.size());
        for (int id : ids) {
            if (id < 0 || id > 255) {
                fail(ErrorKind::encoding,
                     "detokenize: reserved or invalid id " + std::to_string(id) +
                         " inside payload");
            }
            out.push_back(static_cast<char>(static_cast<unsigned char>(id)));
        }
        return out;
    }

    static bool is_reserved(int id) { return id == kSep || id == kEos; }
};

}  // namespace loralab
