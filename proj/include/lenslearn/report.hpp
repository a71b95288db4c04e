#pragma once

#include <cstdint>
#include <filesystem>
#include <string>
#include <vector>

#include "lenslearn/classifier.hpp"
#include "lenslearn/tensor.hpp"

namespace lenslearn::report {

struct GrayImage {
  std::size_t height = 0, width = 0;
  std::vector<std::uint8_t> pixels;  // row-major
};

// Binary PGM, "P5\n<w> <h>\n255\n" followed by the pixels.
std::vector<std::uint8_t> encode_pgm(const GrayImage& image);
GrayImage decode_pgm(const std::vector<std::uint8_t>& bytes, const std::string& source = "pgm");
void write_pgm(const std::filesystem::path& path, const GrayImage& image);

// round(255 * clamp(v, 0, 1))
std::uint8_t to_gray(float v);

struct GridLayout {
  std::size_t cell = 128;  // square cell size in pixels
  std::size_t gutter = 4;  // white separator
  std::size_t columns = 3;

  std::size_t height(std::size_t rows) const { return rows * cell + (rows ? rows - 1 : 0) * gutter; }
  std::size_t width() const { return columns * cell + (columns - 1) * gutter; }
};

// rows x columns tiles, each a rank-2 image of exactly layout.cell pixels square.
GrayImage tile_grid(const std::vector<std::vector<Tensor>>& rows, const GridLayout& layout);

// Row-normalised heat map, `cell` pixels per matrix entry.
GrayImage confusion_heatmap(const nn::ConfusionMatrix& m, std::size_t cell = 16);

// Header "true\pred,0,1,...", one row per true class.
std::string confusion_csv(const nn::ConfusionMatrix& m);
nn::ConfusionMatrix parse_confusion_csv(const std::string& text, const std::string& source = "confusion");

struct AccuracyRow {
  std::string dataset, route;
  double train_accuracy = 0, test_accuracy = 0;
};
std::string accuracy_summary_csv(const std::vector<AccuracyRow>& rows);

struct DatasetRow {
  std::string name;
  std::size_t images = 0, classes = 0;
  double train_mae = 0, test_mae = 0;
};
// Columns Name, #images, #classes, TrainMAE, TestMAE.
std::string dataset_summary_csv(const std::vector<DatasetRow>& rows);

}  // namespace lenslearn::report
