#pragma once

#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "mmfl/error.hpp"
#include "mmfl/tensor.hpp"

namespace mmfl {

using IndexList = std::vector<std::size_t>;

/// Aligned image/audio feature rows with one class label per sample.
struct MultimodalDataset {
  RowMatrixd images;
  RowMatrixd audios;
  std::vector<int> labels;
  int class_count = 0;

  std::size_t size() const noexcept { return labels.size(); }
  Index image_dim() const noexcept { return images.cols(); }
  Index audio_dim() const noexcept { return audios.cols(); }

  /// Equal row counts, labels in range, every class present.
  void validate() const;

  RowMatrixd image_rows(std::span<const std::size_t> indices) const;
  RowMatrixd audio_rows(std::span<const std::size_t> indices) const;
  std::vector<int> label_rows(std::span<const std::size_t> indices) const;
};

struct SyntheticSpec {
  int classes = 9;
  int per_class = 200;
  Index image_dim = 64;
  Index audio_dim = 40;
  Index latent_dim = 16;
  double noise_sigma = 0.5;
  double within_class_sigma = 0.5;
  std::uint64_t seed = 7;

  void validate() const;
};

/// Class prototypes in a latent space, seen through two fixed random linear
/// views plus independent noise. Both views of a sample share its latent.
MultimodalDataset generate_synthetic(const SyntheticSpec& spec);

/// CSV ingestion failure. `row` counts data rows from 1 (0 = header or file level).
class CsvError : public DataError {
 public:
  enum class Kind { io, empty, header, ragged, alignment, non_numeric, unknown_label, missing_class };
  CsvError(Kind kind, std::size_t row, const std::string& what);
  Kind kind() const noexcept { return kind_; }
  std::size_t row() const noexcept { return row_; }

 private:
  Kind kind_;
  std::size_t row_;
};

/// Separate files: the image and audio files carry one header row naming
/// their feature columns, the label file a single "label" column.
/// `class_names`, when given, maps label text to class ids by position;
/// otherwise labels must be non-negative integers.
MultimodalDataset load_csv_features(const std::filesystem::path& image_path, const std::filesystem::path& audio_path,
                                    const std::filesystem::path& label_path,
                                    const std::optional<std::vector<std::string>>& class_names = std::nullopt);

/// One combined file: columns prefixed "img" and "aud" plus one "label" column.
MultimodalDataset load_csv_features(const std::filesystem::path& combined_path,
                                    const std::optional<std::vector<std::string>>& class_names = std::nullopt);

struct SplitSpec {
  double train = 0.8;
  double val = 0.1;
  double test = 0.1;
  std::uint64_t seed = 7;

  void validate() const;
};

struct SplitIndices {
  IndexList train;
  IndexList val;
  IndexList test;
};

/// Class-stratified split; every list is sorted.
SplitIndices split(const MultimodalDataset& dataset, const SplitSpec& spec);

/// Disjoint per-participant index lists drawn from one group's training set.
/// Each participant's list is sorted.
struct Partition {
  int group = 0;
  std::vector<IndexList> participants;

  std::vector<std::size_t> counts() const;
};

/// floor(N/n) samples each, the first N mod n participants get one extra.
Partition partition_balanced(std::span<const std::size_t> train, int participants, std::uint64_t seed);

/// Uniformly random composition of `total` into `parts` values, each >= min_count.
std::vector<std::size_t> random_composition(std::size_t total, int parts, std::size_t min_count, std::uint64_t seed);

/// One random count vector shared by the three groups; samples drawn
/// independently per group. All groups must have the same training size.
std::vector<Partition> partition_unbalanced_paired(std::span<const IndexList> group_trains, int participants,
                                                   std::size_t min_count, std::uint64_t seed);

/// An independent random count vector per group.
std::vector<Partition> partition_unbalanced_random(std::span<const IndexList> group_trains, int participants,
                                                   std::size_t min_count, std::uint64_t seed);

}  // namespace mmfl
