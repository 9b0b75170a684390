#pragma once

#include <span>
#include <string>
#include <vector>

namespace classbench {

using Embedding = std::vector<float>;

// A text encoder. Implementations return one fixed-dimension vector per
// input text, in input order.
class Embedder {
public:
    virtual ~Embedder() = default;
    virtual const std::string& encoder_id() const = 0;
    virtual std::vector<Embedding> embed(std::span<const std::string> texts) = 0;
};

}  // namespace classbench
