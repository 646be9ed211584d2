#include "framediff/vocab.hpp"

#include <fstream>
#include <stdexcept>

namespace fd {

Vocab Vocab::builtin() {
    Vocab v;
    v.tokens_ = {"<null>",  "red",  "green", "blue", "yellow", "circle", "square", "triangle",
                 "moves",   "left", "right", "up",   "down",   "still",  "camera", "zoom",
                 "in",      "out",  "pan",   "then", "cuts",   "to"};
    v.rebuild_index();
    return v;
}

Vocab Vocab::read(const std::string& path) {
    std::ifstream f(path);
    if (!f) throw std::runtime_error("cannot open vocabulary file: " + path);
    Vocab v;
    std::string line;
    while (std::getline(f, line)) v.tokens_.push_back(line);
    if (v.tokens_.empty() || v.tokens_[0] != "<null>")
        throw std::runtime_error("vocabulary file must start with <null> at id 0");
    v.rebuild_index();
    return v;
}

void Vocab::write(const std::string& path) const {
    std::ofstream f(path);
    if (!f) throw std::runtime_error("cannot write vocabulary file: " + path);
    for (const auto& t : tokens_) f << t << "\n";
}

int Vocab::id(const std::string& token) const {
    auto it = index_.find(token);
    if (it == index_.end()) throw std::out_of_range("token not in vocabulary: " + token);
    return it->second;
}

const std::string& Vocab::token(int id) const {
    if (id < 0 || id >= size()) throw std::out_of_range("token id out of range");
    return tokens_[static_cast<size_t>(id)];
}

void Vocab::rebuild_index() {
    index_.clear();
    for (size_t i = 0; i < tokens_.size(); ++i) index_[tokens_[i]] = static_cast<int>(i);
}

}  // namespace fd
