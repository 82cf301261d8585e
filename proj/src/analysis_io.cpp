#include "hmlab/analysis.hpp"

#include <fstream>
#include <stdexcept>

namespace hmlab::analysis {

namespace {

std::string escape_char(char c) {
    switch (c) {
        case '\t': return "\\t";
        case '\n': return "\\n";
        case '\\': return "\\\\";
        default: return std::string(1, c);
    }
}

char unescape_field(const std::string& f, const std::string& path, size_t line_no) {
    if (f.size() == 1) return f[0];
    if (f.size() == 2 && f[0] == '\\') {
        switch (f[1]) {
            case 't': return '\t';
            case 'n': return '\n';
            case '\\': return '\\';
        }
    }
    throw std::runtime_error(path + ":" + std::to_string(line_no) +
                             ": bad character field '" + f + "'");
}

}  // namespace

void render_tsv(const SegmentationRecord& r, const std::string& path) {
    std::ofstream out(path, std::ios::binary);
    if (!out) throw std::runtime_error("cannot write " + path);
    for (size_t i = 0; i < r.text.size(); ++i) {
        out << escape_char(r.text[i]) << '\t' << int(r.z1[i]) << '\t'
            << (i < r.z2.size() ? int(r.z2[i]) : 0) << '\n';
    }
    if (!out) throw std::runtime_error("short write on " + path);
}

SegmentationRecord parse_tsv(const std::string& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw std::runtime_error("cannot read " + path);
    SegmentationRecord r;
    std::string line;
    size_t line_no = 0;
    while (std::getline(in, line)) {
        ++line_no;
        if (line.empty()) continue;
        const size_t t1 = line.find('\t');
        const size_t t2 = line.find('\t', t1 == std::string::npos ? t1 : t1 + 1);
        if (t1 == std::string::npos || t2 == std::string::npos)
            throw std::runtime_error(path + ":" + std::to_string(line_no) +
                                     ": expected char<TAB>z1<TAB>z2");
        r.text.push_back(unescape_field(line.substr(0, t1), path, line_no));
        r.z1.push_back(line.substr(t1 + 1, t2 - t1 - 1) == "1" ? 1 : 0);
        r.z2.push_back(line.substr(t2 + 1) == "1" ? 1 : 0);
    }
    compute_stats(r);
    return r;
}

void render_pgm(const SegmentationRecord& r, const std::string& path) {
    std::ofstream out(path, std::ios::binary);
    if (!out) throw std::runtime_error("cannot write " + path);
    const size_t w = r.text.size();
    // P5, width = characters, height = 2 (z1 above z2), maxval 255
    out << "P5\n" << w << " 2\n255\n";
    auto row = [&](const std::vector<uint8_t>& z) {
        for (size_t i = 0; i < w; ++i) {
            const bool on = i < z.size() && z[i] == 1;
            out.put(on ? char(0) : char(255));
        }
    };
    row(r.z1);
    row(r.z2);
    if (!out) throw std::runtime_error("short write on " + path);
}

}  // namespace hmlab::analysis
