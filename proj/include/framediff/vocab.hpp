#pragma once

#include <string>
#include <unordered_map>
#include <vector>

namespace fd {

// Closed caption vocabulary. Id 0 is reserved for the null (unconditional)
// token. File format: plain text, one token per line, line index = token id.
class Vocab {
   public:
    static Vocab builtin();
    static Vocab read(const std::string& path);
    void write(const std::string& path) const;

    int id(const std::string& token) const;
    const std::string& token(int id) const;
    int size() const { return static_cast<int>(tokens_.size()); }

    static constexpr int kNull = 0;

   private:
    std::vector<std::string> tokens_;
    std::unordered_map<std::string, int> index_;
    void rebuild_index();
};

}  // namespace fd
