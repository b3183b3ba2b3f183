#include "stacktrack/frames.hpp"

#include <algorithm>
#include <cctype>
#include <cmath>
#include <cstdint>
#include <cstring>
#include <filesystem>
#include <fstream>
#include <iomanip>
#include <map>
#include <sstream>

namespace stacktrack {

namespace fs = std::filesystem;

void write_ppm(const std::string& path, const Tensor& image) {
    if (image.ndim() != 3 || image.dim(0) != 3) {
        throw ShapeError("write_ppm expects [3,H,W]");
    }
    const int h = image.dim(1), w = image.dim(2);
    std::ofstream f(path, std::ios::binary);
    if (!f) {
        throw ParseError("cannot open '" + path + "' for writing");
    }
    f << "P6\n" << w << " " << h << "\n255\n";
    std::vector<std::uint8_t> row(static_cast<std::size_t>(w) * 3);
    const std::size_t plane = static_cast<std::size_t>(h) * w;
    for (int y = 0; y < h; ++y) {
        for (int x = 0; x < w; ++x) {
            for (int c = 0; c < 3; ++c) {
                const double v = image.data()[static_cast<std::size_t>(c) * plane +
                                              static_cast<std::size_t>(y) * w + x];
                const double q = std::round(std::min(1.0, std::max(0.0, v)) * 255.0);
                row[static_cast<std::size_t>(x) * 3 + static_cast<std::size_t>(c)] =
                    static_cast<std::uint8_t>(q);
            }
        }
        f.write(reinterpret_cast<const char*>(row.data()), static_cast<std::streamsize>(row.size()));
    }
    if (!f) {
        throw ParseError("short write to '" + path + "'");
    }
}

namespace {

int read_ppm_token(std::istream& in, const std::string& path) {
    // skips whitespace and '#' comments per the netpbm grammar
    int c = in.get();
    while (c != EOF) {
        if (c == '#') {
            while (c != EOF && c != '\n') {
                c = in.get();
            }
        } else if (!std::isspace(c)) {
            break;
        }
        c = in.get();
    }
    if (c == EOF) {
        throw ParseError("'" + path + "': truncated header");
    }
    int value = 0;
    bool any = false;
    while (c != EOF && std::isdigit(c)) {
        value = value * 10 + (c - '0');
        any = true;
        c = in.get();
    }
    if (!any) {
        throw ParseError("'" + path + "': malformed header");
    }
    return value;
}

} // namespace

Tensor read_ppm(const std::string& path) {
    std::ifstream f(path, std::ios::binary);
    if (!f) {
        throw ParseError("cannot open '" + path + "'");
    }
    char magic[2];
    f.read(magic, 2);
    if (!f || magic[0] != 'P' || magic[1] != '6') {
        throw ParseError("'" + path + "' is not a binary P6 pixmap");
    }
    const int w = read_ppm_token(f, path);
    const int h = read_ppm_token(f, path);
    const int maxval = read_ppm_token(f, path);
    if (maxval != 255) {
        throw ParseError("'" + path + "': only maxval 255 is supported");
    }
    std::vector<std::uint8_t> raw(static_cast<std::size_t>(w) * h * 3);
    f.read(reinterpret_cast<char*>(raw.data()), static_cast<std::streamsize>(raw.size()));
    if (!f) {
        throw ParseError("'" + path + "': truncated pixel data");
    }
    Tensor image = Tensor::zeros({3, h, w});
    const std::size_t plane = static_cast<std::size_t>(h) * w;
    for (int y = 0; y < h; ++y) {
        for (int x = 0; x < w; ++x) {
            for (int c = 0; c < 3; ++c) {
                image.data()[static_cast<std::size_t>(c) * plane + static_cast<std::size_t>(y) * w +
                             x] =
                    raw[(static_cast<std::size_t>(y) * w + x) * 3 + static_cast<std::size_t>(c)] /
                    255.0;
            }
        }
    }
    return image;
}

void write_tensor_dump(const std::string& path, const Tensor& t) {
    std::ofstream f(path, std::ios::binary);
    if (!f) {
        throw ParseError("cannot open '" + path + "' for writing");
    }
    const char magic[4] = {'S', 'T', 'K', 'T'};
    const std::uint8_t version = 1;
    const std::uint8_t ndim = static_cast<std::uint8_t>(t.ndim());
    f.write(magic, 4);
    f.write(reinterpret_cast<const char*>(&version), 1);
    f.write(reinterpret_cast<const char*>(&ndim), 1);
    for (int i = 0; i < t.ndim(); ++i) {
        const std::uint32_t d = static_cast<std::uint32_t>(t.dim(i));
        f.write(reinterpret_cast<const char*>(&d), sizeof(d));
    }
    f.write(reinterpret_cast<const char*>(t.data()),
            static_cast<std::streamsize>(t.numel() * sizeof(double)));
    if (!f) {
        throw ParseError("short write to '" + path + "'");
    }
}

Tensor read_tensor_dump(const std::string& path) {
    std::ifstream f(path, std::ios::binary);
    if (!f) {
        throw ParseError("cannot open '" + path + "'");
    }
    char magic[4];
    std::uint8_t version = 0, ndim = 0;
    f.read(magic, 4);
    f.read(reinterpret_cast<char*>(&version), 1);
    f.read(reinterpret_cast<char*>(&ndim), 1);
    if (!f || std::memcmp(magic, "STKT", 4) != 0) {
        throw ParseError("'" + path + "' is not a tensor dump");
    }
    if (version != 1) {
        throw ParseError("'" + path + "': unsupported tensor dump version");
    }
    Shape shape;
    for (std::uint8_t i = 0; i < ndim; ++i) {
        std::uint32_t d = 0;
        f.read(reinterpret_cast<char*>(&d), sizeof(d));
        shape.push_back(static_cast<int>(d));
    }
    if (!f) {
        throw ParseError("'" + path + "': truncated shape");
    }
    std::vector<double> values(shape_numel(shape));
    f.read(reinterpret_cast<char*>(values.data()),
           static_cast<std::streamsize>(values.size() * sizeof(double)));
    if (!f) {
        throw ParseError("'" + path + "': truncated data");
    }
    return Tensor::from(std::move(shape), std::move(values));
}

Tensor resize_bilinear(const Tensor& image, int out_h, int out_w) {
    if (image.ndim() != 3) {
        throw ShapeError("resize_bilinear expects [C,H,W]");
    }
    const int C = image.dim(0), H = image.dim(1), W = image.dim(2);
    if (out_h == H && out_w == W) {
        return image;
    }
    Tensor out = Tensor::zeros({C, out_h, out_w});
    const double sy = static_cast<double>(H) / out_h;
    const double sx = static_cast<double>(W) / out_w;
    for (int c = 0; c < C; ++c) {
        const double* src = image.data() + static_cast<std::size_t>(c) * H * W;
        double* dst = out.data() + static_cast<std::size_t>(c) * out_h * out_w;
        for (int y = 0; y < out_h; ++y) {
            const double fy = std::max(0.0, (y + 0.5) * sy - 0.5);
            const int y0 = std::min(H - 1, static_cast<int>(fy));
            const int y1 = std::min(H - 1, y0 + 1);
            const double wy = fy - y0;
            for (int x = 0; x < out_w; ++x) {
                const double fx = std::max(0.0, (x + 0.5) * sx - 0.5);
                const int x0 = std::min(W - 1, static_cast<int>(fx));
                const int x1 = std::min(W - 1, x0 + 1);
                const double wx = fx - x0;
                const double v00 = src[static_cast<std::size_t>(y0) * W + x0];
                const double v01 = src[static_cast<std::size_t>(y0) * W + x1];
                const double v10 = src[static_cast<std::size_t>(y1) * W + x0];
                const double v11 = src[static_cast<std::size_t>(y1) * W + x1];
                dst[static_cast<std::size_t>(y) * out_w + x] =
                    v00 * (1 - wy) * (1 - wx) + v01 * (1 - wy) * wx + v10 * wy * (1 - wx) +
                    v11 * wy * wx;
            }
        }
    }
    return out;
}

LoadedFrames load_frames(const std::string& dir, int image_size) {
    if (!fs::is_directory(dir)) {
        throw ParseError("'" + dir + "' is not a directory");
    }
    std::map<long, fs::path> by_index;
    for (const auto& entry : fs::directory_iterator(dir)) {
        if (!entry.is_regular_file()) {
            continue;
        }
        const std::string ext = entry.path().extension().string();
        if (ext != ".ppm" && ext != ".tensor") {
            continue;
        }
        const std::string stem = entry.path().stem().string();
        if (stem.empty() ||
            !std::all_of(stem.begin(), stem.end(),
                         [](char c) { return std::isdigit(static_cast<unsigned char>(c)); })) {
            continue;
        }
        by_index[std::stol(stem)] = entry.path();
    }
    if (by_index.empty()) {
        throw ParseError("no frames found under '" + dir + "'");
    }
    const long first = by_index.begin()->first;
    const long last = by_index.rbegin()->first;
    LoadedFrames out;
    for (long i = first; i <= last; ++i) {
        auto it = by_index.find(i);
        if (it == by_index.end()) {
            std::ostringstream os;
            os << "frame index " << std::setw(6) << std::setfill('0') << i << " missing under '"
               << dir << "'";
            throw ParseError(os.str());
        }
        Tensor image = it->second.extension() == ".ppm" ? read_ppm(it->second.string())
                                                        : read_tensor_dump(it->second.string());
        if (image.ndim() != 3 || image.dim(0) != 3) {
            throw ParseError("frame '" + it->second.string() + "' is not a [3,H,W] image");
        }
        if (out.frames.empty()) {
            out.source_h = image.dim(1);
            out.source_w = image.dim(2);
        }
        out.frames.push_back(resize_bilinear(image, image_size, image_size));
    }
    return out;
}

SeqInfo read_seqinfo(const std::string& path) {
    std::ifstream f(path);
    if (!f) {
        throw ParseError("cannot open '" + path + "'");
    }
    SeqInfo info;
    std::string line;
    while (std::getline(f, line)) {
        const auto eq = line.find('=');
        if (eq == std::string::npos) {
            continue;
        }
        const std::string key = line.substr(0, eq);
        std::string value = line.substr(eq + 1);
        while (!value.empty() && (value.back() == '\r' || value.back() == ' ')) {
            value.pop_back();
        }
        if (key == "name") {
            info.name = value;
        } else if (key == "imWidth") {
            info.width = std::stoi(value);
        } else if (key == "imHeight") {
            info.height = std::stoi(value);
        } else if (key == "seqLength") {
            info.length = std::stoi(value);
        }
    }
    return info;
}

void write_seqinfo(const std::string& path, const SeqInfo& info) {
    std::ofstream f(path);
    if (!f) {
        throw ParseError("cannot open '" + path + "' for writing");
    }
    f << "[Sequence]\n";
    f << "name=" << info.name << "\n";
    f << "imDir=img1\n";
    f << "frameRate=30\n";
    f << "seqLength=" << info.length << "\n";
    f << "imWidth=" << info.width << "\n";
    f << "imHeight=" << info.height << "\n";
    f << "imExt=.ppm\n";
}

} // namespace stacktrack
