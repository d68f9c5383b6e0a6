#pragma once

// Minimal software rasterizer emitting 24-bit BMP images for report plots:
// line charts, scatter plots, ROC curves, and lane-geometry overlays.

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <fstream>
#include <stdexcept>
#include <string>
#include <vector>

namespace lanerep::plot {

struct Color {
    uint8_t r = 0, g = 0, b = 0;
};

inline constexpr Color kBlack{0, 0, 0};
inline constexpr Color kGray{180, 180, 180};
inline constexpr Color kBlue{40, 90, 200};
inline constexpr Color kRed{200, 60, 50};
inline constexpr Color kGreen{40, 150, 80};
inline constexpr Color kOrange{230, 140, 30};
inline constexpr Color kPurple{130, 60, 180};

inline const std::vector<Color>& palette() {
    static const std::vector<Color> p{kBlue, kRed, kGreen, kOrange, kPurple, kBlack};
    return p;
}

class Canvas {
public:
    int width, height;
    std::vector<uint8_t> px;  // BGR rows, bottom-up padding handled at save

    Canvas(int w, int h) : width(w), height(h), px(static_cast<size_t>(w) * h * 3, 255) {}

    void set(int x, int y, Color c) {
        if (x < 0 || y < 0 || x >= width || y >= height) return;
        size_t i = (static_cast<size_t>(y) * width + x) * 3;
        px[i] = c.b;
        px[i + 1] = c.g;
        px[i + 2] = c.r;
    }

    void dot(int x, int y, Color c, int radius = 2) {
        for (int dy = -radius; dy <= radius; ++dy)
            for (int dx = -radius; dx <= radius; ++dx)
                if (dx * dx + dy * dy <= radius * radius) set(x + dx, y + dy, c);
    }

    void line(int x0, int y0, int x1, int y1, Color c) {
        int dx = std::abs(x1 - x0), dy = -std::abs(y1 - y0);
        int sx = x0 < x1 ? 1 : -1, sy = y0 < y1 ? 1 : -1;
        int err = dx + dy;
        while (true) {
            set(x0, y0, c);
            if (x0 == x1 && y0 == y1) break;
            int e2 = 2 * err;
            if (e2 >= dy) {
                err += dy;
                x0 += sx;
            }
            if (e2 <= dx) {
                err += dx;
                y0 += sy;
            }
        }
    }

    void save_bmp(const std::string& path) const {
        std::ofstream os(path, std::ios::binary);
        if (!os) throw std::runtime_error("save_bmp: cannot write " + path);
        const int row_bytes = width * 3;
        const int pad = (4 - row_bytes % 4) % 4;
        const uint32_t data_size = static_cast<uint32_t>((row_bytes + pad) * height);
        const uint32_t file_size = 54 + data_size;
        uint8_t header[54] = {};
        header[0] = 'B';
        header[1] = 'M';
        auto put32 = [&](int off, uint32_t v) {
            header[off] = v & 0xff;
            header[off + 1] = (v >> 8) & 0xff;
            header[off + 2] = (v >> 16) & 0xff;
            header[off + 3] = (v >> 24) & 0xff;
        };
        put32(2, file_size);
        put32(10, 54);
        put32(14, 40);
        put32(18, static_cast<uint32_t>(width));
        put32(22, static_cast<uint32_t>(height));
        header[26] = 1;
        header[28] = 24;
        put32(34, data_size);
        os.write(reinterpret_cast<const char*>(header), 54);
        const char zeros[4] = {};
        for (int y = height - 1; y >= 0; --y) {  // BMP stores bottom-up
            os.write(reinterpret_cast<const char*>(&px[(static_cast<size_t>(y) * width) * 3]),
                     row_bytes);
            os.write(zeros, pad);
        }
    }
};

// axis mapping from data space to a margined plot area
struct Axes {
    int width = 640, height = 480, margin = 40;
    double x_min = 0, x_max = 1, y_min = 0, y_max = 1;

    int px_x(double x) const {
        double f = (x - x_min) / (x_max - x_min + 1e-300);
        return margin + static_cast<int>(f * (width - 2 * margin));
    }
    int px_y(double y) const {
        double f = (y - y_min) / (y_max - y_min + 1e-300);
        return height - margin - static_cast<int>(f * (height - 2 * margin));
    }

    void fit(const std::vector<double>& xs, const std::vector<double>& ys, bool expand = true) {
        if (xs.empty()) return;
        double xl = *std::min_element(xs.begin(), xs.end());
        double xh = *std::max_element(xs.begin(), xs.end());
        double yl = *std::min_element(ys.begin(), ys.end());
        double yh = *std::max_element(ys.begin(), ys.end());
        if (expand) {
            double dx = (xh - xl) * 0.05 + 1e-9, dy = (yh - yl) * 0.05 + 1e-9;
            xl -= dx;
            xh += dx;
            yl -= dy;
            yh += dy;
        }
        x_min = xl;
        x_max = xh;
        y_min = yl;
        y_max = yh;
    }

    void draw_frame(Canvas& c) const {
        c.line(margin, margin, margin, height - margin, kBlack);
        c.line(margin, height - margin, width - margin, height - margin, kBlack);
        // light gridlines at quarters
        for (int q = 1; q <= 3; ++q) {
            int gx = margin + (width - 2 * margin) * q / 4;
            int gy = margin + (height - 2 * margin) * q / 4;
            for (int y = margin; y < height - margin; y += 4) c.set(gx, y, kGray);
            for (int x = margin; x < width - margin; x += 4) c.set(x, gy, kGray);
        }
    }
};

struct Series {
    std::vector<double> x, y;
    Color color = kBlue;
    bool markers = false;
};

inline void line_chart(const std::vector<Series>& series, const std::string& path, int w = 640,
                       int h = 480) {
    Canvas c(w, h);
    Axes ax;
    ax.width = w;
    ax.height = h;
    std::vector<double> all_x, all_y;
    for (const auto& s : series) {
        all_x.insert(all_x.end(), s.x.begin(), s.x.end());
        all_y.insert(all_y.end(), s.y.begin(), s.y.end());
    }
    ax.fit(all_x, all_y);
    ax.draw_frame(c);
    for (const auto& s : series) {
        for (size_t i = 0; i + 1 < s.x.size(); ++i)
            c.line(ax.px_x(s.x[i]), ax.px_y(s.y[i]), ax.px_x(s.x[i + 1]), ax.px_y(s.y[i + 1]),
                   s.color);
        if (s.markers)
            for (size_t i = 0; i < s.x.size(); ++i) c.dot(ax.px_x(s.x[i]), ax.px_y(s.y[i]), s.color);
    }
    c.save_bmp(path);
}

inline void scatter(const std::vector<double>& x, const std::vector<double>& y,
                    const std::string& path, int w = 640, int h = 480,
                    bool identity_line = false) {
    Canvas c(w, h);
    Axes ax;
    ax.width = w;
    ax.height = h;
    ax.fit(x, y);
    ax.draw_frame(c);
    if (identity_line) {
        double lo = std::max(ax.x_min, ax.y_min), hi = std::min(ax.x_max, ax.y_max);
        c.line(ax.px_x(lo), ax.px_y(lo), ax.px_x(hi), ax.px_y(hi), kGray);
    }
    for (size_t i = 0; i < x.size(); ++i) c.dot(ax.px_x(x[i]), ax.px_y(y[i]), kBlue);
    c.save_bmp(path);
}

inline void roc_plot(const std::vector<double>& fpr, const std::vector<double>& tpr,
                     const std::string& path, int w = 480, int h = 480) {
    Canvas c(w, h);
    Axes ax;
    ax.width = w;
    ax.height = h;
    ax.x_min = 0;
    ax.x_max = 1;
    ax.y_min = 0;
    ax.y_max = 1;
    ax.draw_frame(c);
    c.line(ax.px_x(0), ax.px_y(0), ax.px_x(1), ax.px_y(1), kGray);  // chance diagonal
    for (size_t i = 0; i + 1 < fpr.size(); ++i)
        c.line(ax.px_x(fpr[i]), ax.px_y(tpr[i]), ax.px_x(fpr[i + 1]), ax.px_y(tpr[i + 1]), kRed);
    c.save_bmp(path);
}

// 2-D geometry overlay: each polyline drawn in its series color
inline void geometry_overlay(const std::vector<Series>& polylines, const std::string& path,
                             int w = 560, int h = 560) {
    line_chart(polylines, path, w, h);
}

}  // namespace lanerep::plot
