// Copyright (c) 2026 gecolab authors
// SPDX-License-Identifier: Apache-2.0

#include "gecolab/image_io.hpp"

#include <opencv2/imgcodecs.hpp>

#include <algorithm>
#include <cmath>

#include "gecolab/errors.hpp"

namespace gecolab {

namespace {

cv::Mat to_mat_bgr8(const Tensor& img) {
    if (img.ndim() != 3 || img.dim(0) != 3)
        throw ShapeError("write_png: expected [3,H,W], got " + Tensor::shape_str(img.shape()));
    const int h = img.dim(1), w = img.dim(2);
    cv::Mat m(h, w, CV_8UC3);
    for (int y = 0; y < h; ++y) {
        auto* row = m.ptr<unsigned char>(y);
        for (int x = 0; x < w; ++x) {
            for (int c = 0; c < 3; ++c) {
                const double v = to_unit(img.at({c, y, x})) * 255.0;
                const int q = static_cast<int>(std::lround(std::clamp(v, 0.0, 255.0)));
                row[3 * x + (2 - c)] = static_cast<unsigned char>(q);  // RGB -> BGR
            }
        }
    }
    return m;
}

} // namespace

void write_png(const std::filesystem::path& p, const Tensor& img) {
    if (!cv::imwrite(p.string(), to_mat_bgr8(img)))
        throw StorageError("write_png: failed to write " + p.string());
}

std::vector<unsigned char> encode_png(const Tensor& img) {
    std::vector<unsigned char> buf;
    if (!cv::imencode(".png", to_mat_bgr8(img), buf))
        throw StorageError("encode_png: encode failed");
    return buf;
}

Tensor read_png(const std::filesystem::path& p) {
    cv::Mat m = cv::imread(p.string(), cv::IMREAD_COLOR);
    if (m.empty()) throw StorageError("read_png: cannot read " + p.string());
    Tensor img({3, m.rows, m.cols});
    for (int y = 0; y < m.rows; ++y) {
        const auto* row = m.ptr<unsigned char>(y);
        for (int x = 0; x < m.cols; ++x)
            for (int c = 0; c < 3; ++c)
                img.at({c, y, x}) = from_unit(row[3 * x + (2 - c)] / 255.0);
    }
    return img;
}

Tensor tile_views(const Tensor& views) {
    if (views.ndim() != 4 || views.dim(1) != 3)
        throw ShapeError("tile_views: expected [V,3,H,W]");
    const int v = views.dim(0), h = views.dim(2), w = views.dim(3);
    Tensor strip({3, h, v * w});
    for (int k = 0; k < v; ++k)
        for (int c = 0; c < 3; ++c)
            for (int y = 0; y < h; ++y)
                for (int x = 0; x < w; ++x)
                    strip.at({c, y, k * w + x}) = views.at({k, c, y, x});
    return strip;
}

} // namespace gecolab
