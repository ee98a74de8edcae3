#pragma once

#include <cstdint>
#include <functional>
#include <string>
#include <vector>

namespace gfc {

// Stratum / conditioning key: a flat tuple of small level codes. -1 marks
// "absent" slots so keys of the same shape always compare positionally.
using Key = std::vector<int16_t>;

struct KeyHash {
    size_t operator()(const Key& k) const {
        uint64_t h = 1469598103934665603ULL; // FNV offset basis
        for (int16_t v : k) {
            h ^= static_cast<uint16_t>(v);
            h *= 1099511628211ULL;
        }
        return static_cast<size_t>(h);
    }
};

inline void key_append(Key& k, const Key& tail) {
    k.insert(k.end(), tail.begin(), tail.end());
}

// All length-`len` tuples over {0..levels-1}, odometer order, first slot
// most significant.
inline std::vector<Key> enumerate_tuples(int levels, int len) {
    std::vector<Key> out;
    Key cur(static_cast<size_t>(len), 0);
    while (true) {
        out.push_back(cur);
        int j = len - 1;
        while (j >= 0 && cur[static_cast<size_t>(j)] == levels - 1) {
            cur[static_cast<size_t>(j)] = 0;
            --j;
        }
        if (j < 0) break;
        ++cur[static_cast<size_t>(j)];
    }
    return out;
}

inline std::string key_to_string(const Key& k) {
    std::string s = "(";
    for (size_t i = 0; i < k.size(); ++i) {
        if (i) s += ",";
        s += std::to_string(k[i]);
    }
    s += ")";
    return s;
}

} // namespace gfc
