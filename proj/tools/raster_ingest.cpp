#include "raster_ingest.hpp"

#include <opencv2/core.hpp>
#include <opencv2/imgcodecs.hpp>

namespace lulc::ingest {

namespace {

const std::vector<SatellitePreset>& presets() {
    static const std::vector<SatellitePreset> list = {
        {"sentinel2",
         {{"B2", 492.1, 66, 10}, {"B3", 559, 36, 10}, {"B4", 665, 31, 10}, {"B8", 833, 106, 10}},
         {"B4", "B3", "B2"},
         224,
         12},
        {"worldview2",
         {{"B2", 480, 60, 1.84}, {"B3", 545, 70, 1.84}, {"B5", 660, 60, 1.84}, {"B7", 833, 125, 1.84}},
         {"B5", "B3", "B2"},
         512,
         12},
        {"pleiades1",
         {{"B2", 490, 120, 2}, {"B3", 550, 120, 2}, {"B4", 660, 120, 2}, {"B5", 850, 200, 2}},
         {"B4", "B3", "B2"},
         448,
         12},
        {"deepglobe",
         {{"R", 660, 60, 0.5}, {"G", 545, 60, 0.5}, {"B", 480, 60, 0.5}},
         {"R", "G", "B"},
         612,
         8},
    };
    return list;
}

cv::Mat imread_checked(const std::string& path) {
    cv::Mat m = cv::imread(path, cv::IMREAD_UNCHANGED | cv::IMREAD_ANYDEPTH);
    LULC_CHECK_T(!m.empty(), DataError, "cannot read raster " << path);
    return m;
}

}  // namespace

const SatellitePreset& satellite_preset(const std::string& name) {
    for (const SatellitePreset& p : presets())
        if (p.name == name) return p;
    throw ConfigError("unknown satellite preset \"" + name +
                      "\" (sentinel2|worldview2|pleiades1|deepglobe)");
}

std::vector<std::string> satellite_preset_names() {
    std::vector<std::string> names;
    for (const SatellitePreset& p : presets()) names.push_back(p.name);
    return names;
}

std::vector<uint16_t> read_band_plane(const std::string& path, int& height, int& width) {
    cv::Mat m = imread_checked(path);
    LULC_CHECK_T(m.channels() == 1, DataError,
                 "band raster " << path << " has " << m.channels() << " channels, expected 1");
    height = m.rows;
    width = m.cols;
    std::vector<uint16_t> plane(static_cast<size_t>(m.rows) * m.cols);
    if (m.depth() == CV_8U) {
        for (int y = 0; y < m.rows; ++y)
            for (int x = 0; x < m.cols; ++x)
                plane[static_cast<size_t>(y) * m.cols + x] = m.at<uint8_t>(y, x);
    } else if (m.depth() == CV_16U) {
        for (int y = 0; y < m.rows; ++y)
            for (int x = 0; x < m.cols; ++x)
                plane[static_cast<size_t>(y) * m.cols + x] = m.at<uint16_t>(y, x);
    } else {
        throw DataError("band raster " + path + " must be 8- or 16-bit unsigned integer");
    }
    return plane;
}

data::IntGrid read_clc_raster(const std::string& path) {
    cv::Mat m = imread_checked(path);
    LULC_CHECK_T(m.channels() == 1, DataError,
                 "CLC raster " << path << " has " << m.channels() << " channels, expected 1");
    data::IntGrid grid(m.rows, m.cols);
    for (int y = 0; y < m.rows; ++y)
        for (int x = 0; x < m.cols; ++x) {
            int32_t v;
            switch (m.depth()) {
                case CV_8U: v = m.at<uint8_t>(y, x); break;
                case CV_16U: v = m.at<uint16_t>(y, x); break;
                case CV_16S: v = m.at<int16_t>(y, x); break;
                case CV_32S: v = m.at<int32_t>(y, x); break;
                default:
                    throw DataError("CLC raster " + path + " must hold integer samples");
            }
            grid.at(y, x) = v;
        }
    return grid;
}

std::vector<std::vector<uint16_t>> read_rgb_planes(const std::string& path, int& height,
                                                   int& width) {
    cv::Mat m = imread_checked(path);
    LULC_CHECK_T(m.channels() == 3 && m.depth() == CV_8U, DataError,
                 "RGB raster " << path << " must be 3-channel 8-bit");
    height = m.rows;
    width = m.cols;
    std::vector<std::vector<uint16_t>> planes(3);
    for (auto& p : planes) p.resize(static_cast<size_t>(m.rows) * m.cols);
    for (int y = 0; y < m.rows; ++y)
        for (int x = 0; x < m.cols; ++x) {
            const cv::Vec3b bgr = m.at<cv::Vec3b>(y, x);  // OpenCV loads BGR
            planes[0][static_cast<size_t>(y) * m.cols + x] = bgr[2];
            planes[1][static_cast<size_t>(y) * m.cols + x] = bgr[1];
            planes[2][static_cast<size_t>(y) * m.cols + x] = bgr[0];
        }
    return planes;
}

}  // namespace lulc::ingest
