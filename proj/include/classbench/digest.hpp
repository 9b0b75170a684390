#pragma once

#include <memory>
#include <string>
#include <string_view>

namespace classbench {

// Lowercase hex SHA-256.
std::string sha256_hex(std::string_view bytes);

// Standard padded base64 (RFC 4648), for data URLs and embedded images.
std::string base64_encode(std::string_view bytes);

// Incremental form; feed() length-prefixes each field so that
// ("ab","c") and ("a","bc") hash differently.
class FieldHasher {
public:
    FieldHasher();
    ~FieldHasher();
    FieldHasher(const FieldHasher&) = delete;
    FieldHasher& operator=(const FieldHasher&) = delete;

    FieldHasher& feed(std::string_view field);
    std::string hex();

private:
    struct State;
    std::unique_ptr<State> state_;
};

}  // namespace classbench
