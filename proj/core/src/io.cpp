#include "mbp/io.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <sstream>

namespace mbp {

void write_file_atomic(const std::filesystem::path& path, const std::string& content) {
    auto tmp = path;
    tmp += ".tmp";
    {
        std::ofstream out(tmp, std::ios::binary | std::ios::trunc);
        if (!out) throw Error("cannot open " + tmp.string() + " for writing");
        out.write(content.data(), static_cast<std::streamsize>(content.size()));
        if (!out) throw Error("write failed for " + tmp.string());
    }
    std::error_code ec;
    std::filesystem::rename(tmp, path, ec);
    if (ec) throw Error("rename to " + path.string() + " failed: " + ec.message());
}

std::string encode_pgm(const Grid& grid, const Field& field, double beta) {
    const std::size_t m = grid.nodes_per_axis();
    const std::size_t width = m;
    const std::size_t height = grid.size() / m;
    if (field.nodes() != grid.size()) throw Error("field does not match grid");
    if (!(beta > 0.0)) throw Error("snapshot bound must be positive");
    std::ostringstream os;
    os << "P5\n" << width << ' ' << height << "\n65535\n";
    std::string out = os.str();
    out.reserve(out.size() + 2 * grid.size());
    for (std::size_t i = 0; i < grid.size(); ++i) {
        double v = field.node(i)[0];
        double s = std::clamp((v + beta) / (2.0 * beta), 0.0, 1.0);
        if (std::isnan(v)) s = 0.0;
        auto p = static_cast<std::uint16_t>(std::lround(s * 65535.0));
        out.push_back(static_cast<char>(p >> 8));
        out.push_back(static_cast<char>(p & 0xff));
    }
    return out;
}

std::string encode_field_csv(const Grid& grid, const Field& field) {
    if (field.nodes() != grid.size()) throw Error("field does not match grid");
    std::ostringstream os;
    os.precision(17);
    os << "node";
    for (int a = 0; a < grid.dim(); ++a) os << ",x" << a;
    for (std::size_t c = 0; c < field.components(); ++c) os << ",c" << c;
    os << '\n';
    for (std::size_t i = 0; i < grid.size(); ++i) {
        os << i;
        for (double x : grid.coordinates(i)) os << ',' << x;
        for (double v : field.node(i)) os << ',' << v;
        os << '\n';
    }
    return os.str();
}

PgmImage decode_pgm(const std::string& bytes) {
    std::istringstream is(bytes);
    std::string magic;
    PgmImage img;
    is >> magic >> img.width >> img.height >> img.maxval;
    if (!is || magic != "P5") throw Error("not a binary PGM");
    is.get();
    const std::size_t bpp = img.maxval > 255 ? 2 : 1;
    const auto offset = static_cast<std::size_t>(is.tellg());
    const std::size_t count = img.width * img.height;
    if (bytes.size() < offset + bpp * count) throw Error("truncated PGM");
    img.pixels.resize(count);
    for (std::size_t k = 0; k < count; ++k) {
        if (bpp == 2) {
            auto hi = static_cast<unsigned char>(bytes[offset + 2 * k]);
            auto lo = static_cast<unsigned char>(bytes[offset + 2 * k + 1]);
            img.pixels[k] = static_cast<std::uint16_t>((hi << 8) | lo);
        } else {
            img.pixels[k] = static_cast<unsigned char>(bytes[offset + k]);
        }
    }
    return img;
}

std::string format_time(double t) {
    std::ostringstream os;
    os.precision(12);
    os << t;
    return os.str();
}

}  // namespace mbp
