#pragma once

#include <cstdint>
#include <random>
#include <string>

// Low-entropy word-salad corpus: a small closed vocabulary of short words
// with sentence breaks, so a character model learns quickly and whitespace
// agreement has gold boundaries to match.
inline std::string synthetic_text(size_t approx_bytes, uint64_t seed) {
    static const char* words[] = {"the",  "cat",  "sat",   "on",    "mat",  "dog",  "ran",
                                  "big",  "red",  "sun",   "moon",  "star", "tree", "fish",
                                  "bird", "water", "stone", "wind",  "fire", "leaf"};
    std::mt19937_64 rng(seed);
    std::string out;
    out.reserve(approx_bytes + 64);
    size_t since_break = 0;
    while (out.size() < approx_bytes) {
        out += words[rng() % 20];
        if (++since_break % 8 == 0)
            out += ". ";
        else
            out += ' ';
    }
    return out;
}
