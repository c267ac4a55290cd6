#include "mmfl/data.hpp"

#include <algorithm>
#include <charconv>
#include <cmath>
#include <fstream>
#include <numeric>
#include <random>
#include <sstream>

#include "mmfl/random.hpp"

namespace mmfl {

void MultimodalDataset::validate() const {
  const auto n = static_cast<Index>(labels.size());
  if (n == 0) throw DataError("dataset is empty");
  if (images.rows() != n || audios.rows() != n)
    throw DataError("dataset views disagree on sample count: " + std::to_string(images.rows()) + " images, " +
                    std::to_string(audios.rows()) + " audios, " + std::to_string(n) + " labels");
  if (class_count < 1) throw DataError("dataset declares no classes");
  std::vector<bool> seen(static_cast<std::size_t>(class_count), false);
  for (int y : labels) {
    if (y < 0 || y >= class_count) throw DataError("label " + std::to_string(y) + " outside [0, " +
                                                   std::to_string(class_count) + ")");
    seen[static_cast<std::size_t>(y)] = true;
  }
  for (std::size_t c = 0; c < seen.size(); ++c)
    if (!seen[c]) throw DataError("class " + std::to_string(c) + " has no samples");
}

namespace {

RowMatrixd gather_rows(const RowMatrixd& m, std::span<const std::size_t> indices) {
  RowMatrixd out(static_cast<Index>(indices.size()), m.cols());
  for (std::size_t i = 0; i < indices.size(); ++i) {
    if (indices[i] >= static_cast<std::size_t>(m.rows())) throw DataError("sample index out of range");
    out.row(static_cast<Index>(i)) = m.row(static_cast<Index>(indices[i]));
  }
  return out;
}

}  // namespace

RowMatrixd MultimodalDataset::image_rows(std::span<const std::size_t> indices) const {
  return gather_rows(images, indices);
}

RowMatrixd MultimodalDataset::audio_rows(std::span<const std::size_t> indices) const {
  return gather_rows(audios, indices);
}

std::vector<int> MultimodalDataset::label_rows(std::span<const std::size_t> indices) const {
  std::vector<int> out;
  out.reserve(indices.size());
  for (std::size_t i : indices) out.push_back(labels.at(i));
  return out;
}

// ---------------------------------------------------------------------------
// Synthetic generator

void SyntheticSpec::validate() const {
  if (classes < 2) throw ConfigError("synthetic data needs at least 2 classes");
  if (per_class < 1) throw ConfigError("synthetic data needs at least 1 sample per class");
  if (image_dim < 1 || audio_dim < 1) throw ConfigError("synthetic view dimensions must be positive");
  if (latent_dim < 1) throw ConfigError("latent_dim must be at least 1");
  if (!(noise_sigma >= 0.0) || !std::isfinite(noise_sigma)) throw ConfigError("noise_sigma must be >= 0");
  if (!(within_class_sigma >= 0.0) || !std::isfinite(within_class_sigma))
    throw ConfigError("within_class_sigma must be >= 0");
}

MultimodalDataset generate_synthetic(const SyntheticSpec& spec) {
  spec.validate();
  std::normal_distribution<double> gauss(0.0, 1.0);
  auto draw = [&](std::mt19937_64& rng, Index rows, Index cols, double sd) {
    RowMatrixd m(rows, cols);
    for (Index i = 0; i < m.size(); ++i) m.data()[i] = sd * gauss(rng);
    return m;
  };

  std::mt19937_64 structure(derive_seed({spec.seed, 1}));
  const RowMatrixd prototypes = draw(structure, spec.classes, spec.latent_dim, 1.0);
  const double proj_sd = 1.0 / std::sqrt(static_cast<double>(spec.latent_dim));
  const RowMatrixd to_image = draw(structure, spec.latent_dim, spec.image_dim, proj_sd);
  const RowMatrixd to_audio = draw(structure, spec.latent_dim, spec.audio_dim, proj_sd);

  const Index n = static_cast<Index>(spec.classes) * spec.per_class;
  std::vector<int> labels(static_cast<std::size_t>(n));
  for (Index i = 0; i < n; ++i) labels[static_cast<std::size_t>(i)] = static_cast<int>(i / spec.per_class);
  std::mt19937_64 order_rng(derive_seed({spec.seed, 2}));
  std::shuffle(labels.begin(), labels.end(), order_rng);

  std::mt19937_64 sample_rng(derive_seed({spec.seed, 3}));
  RowMatrixd latent(n, spec.latent_dim);
  for (Index i = 0; i < n; ++i)
    latent.row(i) = prototypes.row(labels[static_cast<std::size_t>(i)]) +
                    draw(sample_rng, 1, spec.latent_dim, spec.within_class_sigma);

  // Row by row so equal latents map to bit-identical views.
  RowMatrixd images(n, spec.image_dim), audios(n, spec.audio_dim);
  for (Index i = 0; i < n; ++i) {
    images.row(i) = latent.row(i) * to_image;
    audios.row(i) = latent.row(i) * to_audio;
  }
  MultimodalDataset ds;
  ds.images = images + draw(sample_rng, n, spec.image_dim, spec.noise_sigma);
  ds.audios = audios + draw(sample_rng, n, spec.audio_dim, spec.noise_sigma);
  ds.labels = std::move(labels);
  ds.class_count = spec.classes;
  return ds;
}

// ---------------------------------------------------------------------------
// CSV ingestion

CsvError::CsvError(Kind kind, std::size_t row, const std::string& what)
    : DataError(row ? "row " + std::to_string(row) + ": " + what : what), kind_(kind), row_(row) {}

namespace {

using Cells = std::vector<std::string>;

std::string trim(std::string_view s) {
  const auto b = s.find_first_not_of(" \t");
  if (b == std::string_view::npos) return {};
  const auto e = s.find_last_not_of(" \t");
  return std::string(s.substr(b, e - b + 1));
}

Cells split_cells(const std::string& line) {
  Cells out;
  std::size_t start = 0;
  while (true) {
    const auto comma = line.find(',', start);
    out.push_back(trim(std::string_view(line).substr(start, comma - start)));
    if (comma == std::string::npos) break;
    start = comma + 1;
  }
  return out;
}

struct CsvTable {
  std::string name;
  Cells header;
  std::vector<Cells> rows;
};

CsvTable read_table(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw CsvError(CsvError::Kind::io, 0, "cannot open " + path.string());
  CsvTable t;
  t.name = path.filename().string();
  std::string line;
  bool have_header = false;
  std::size_t row = 0;
  while (std::getline(in, line)) {
    if (!line.empty() && line.back() == '\r') line.pop_back();
    if (trim(line).empty()) continue;
    Cells cells = split_cells(line);
    if (!have_header) {
      t.header = std::move(cells);
      have_header = true;
      continue;
    }
    ++row;
    if (cells.size() != t.header.size())
      throw CsvError(CsvError::Kind::ragged, row,
                     t.name + ": expected " + std::to_string(t.header.size()) + " cells, found " +
                         std::to_string(cells.size()));
    t.rows.push_back(std::move(cells));
  }
  if (t.rows.empty()) throw CsvError(CsvError::Kind::empty, 0, t.name + ": no data rows");
  return t;
}

double parse_number(const std::string& cell, std::size_t row, const std::string& file) {
  double value = 0.0;
  const char* first = cell.data();
  const char* last = cell.data() + cell.size();
  auto [ptr, ec] = std::from_chars(first, last, value);
  if (cell.empty() || ec != std::errc() || ptr != last || !std::isfinite(value))
    throw CsvError(CsvError::Kind::non_numeric, row, file + ": '" + cell + "' is not a finite number");
  return value;
}

int parse_label(const std::string& cell, std::size_t row, const std::optional<std::vector<std::string>>& names) {
  if (names) {
    auto it = std::find(names->begin(), names->end(), cell);
    if (it == names->end()) throw CsvError(CsvError::Kind::unknown_label, row, "unknown label '" + cell + "'");
    return static_cast<int>(it - names->begin());
  }
  int value = -1;
  auto [ptr, ec] = std::from_chars(cell.data(), cell.data() + cell.size(), value);
  if (cell.empty() || ec != std::errc() || ptr != cell.data() + cell.size() || value < 0)
    throw CsvError(CsvError::Kind::unknown_label, row, "unknown label '" + cell + "'");
  return value;
}

RowMatrixd numeric_columns(const CsvTable& t, const std::vector<std::size_t>& columns) {
  RowMatrixd m(static_cast<Index>(t.rows.size()), static_cast<Index>(columns.size()));
  for (std::size_t r = 0; r < t.rows.size(); ++r)
    for (std::size_t c = 0; c < columns.size(); ++c)
      m(static_cast<Index>(r), static_cast<Index>(c)) = parse_number(t.rows[r][columns[c]], r + 1, t.name);
  return m;
}

std::vector<std::size_t> all_columns(const CsvTable& t) {
  std::vector<std::size_t> cols(t.header.size());
  std::iota(cols.begin(), cols.end(), 0);
  return cols;
}

MultimodalDataset finish(RowMatrixd images, RowMatrixd audios, std::vector<int> labels,
                         const std::optional<std::vector<std::string>>& names) {
  MultimodalDataset ds;
  ds.images = std::move(images);
  ds.audios = std::move(audios);
  ds.labels = std::move(labels);
  ds.class_count = names ? static_cast<int>(names->size()) : *std::max_element(ds.labels.begin(), ds.labels.end()) + 1;
  std::vector<bool> seen(static_cast<std::size_t>(ds.class_count), false);
  for (int y : ds.labels) seen[static_cast<std::size_t>(y)] = true;
  for (std::size_t c = 0; c < seen.size(); ++c)
    if (!seen[c]) throw CsvError(CsvError::Kind::missing_class, 0, "class " + std::to_string(c) + " has no samples");
  return ds;
}

}  // namespace

MultimodalDataset load_csv_features(const std::filesystem::path& image_path, const std::filesystem::path& audio_path,
                                    const std::filesystem::path& label_path,
                                    const std::optional<std::vector<std::string>>& class_names) {
  const CsvTable img = read_table(image_path);
  const CsvTable aud = read_table(audio_path);
  const CsvTable lab = read_table(label_path);
  if (img.rows.size() != aud.rows.size() || img.rows.size() != lab.rows.size())
    throw CsvError(CsvError::Kind::alignment, 0,
                   "row counts differ: " + img.name + " has " + std::to_string(img.rows.size()) + ", " + aud.name +
                       " has " + std::to_string(aud.rows.size()) + ", " + lab.name + " has " +
                       std::to_string(lab.rows.size()));
  if (lab.header.size() != 1 || lab.header[0] != "label")
    throw CsvError(CsvError::Kind::header, 0, lab.name + ": expected a single 'label' column");
  std::vector<int> labels;
  labels.reserve(lab.rows.size());
  for (std::size_t r = 0; r < lab.rows.size(); ++r) labels.push_back(parse_label(lab.rows[r][0], r + 1, class_names));
  return finish(numeric_columns(img, all_columns(img)), numeric_columns(aud, all_columns(aud)), std::move(labels),
                class_names);
}

MultimodalDataset load_csv_features(const std::filesystem::path& combined_path,
                                    const std::optional<std::vector<std::string>>& class_names) {
  const CsvTable t = read_table(combined_path);
  std::vector<std::size_t> img_cols, aud_cols;
  std::optional<std::size_t> label_col;
  for (std::size_t c = 0; c < t.header.size(); ++c) {
    const auto& h = t.header[c];
    if (h == "label") {
      if (label_col) throw CsvError(CsvError::Kind::header, 0, t.name + ": more than one 'label' column");
      label_col = c;
    } else if (h.rfind("img", 0) == 0) {
      img_cols.push_back(c);
    } else if (h.rfind("aud", 0) == 0) {
      aud_cols.push_back(c);
    } else {
      throw CsvError(CsvError::Kind::header, 0, t.name + ": column '" + h + "' is neither img*, aud* nor label");
    }
  }
  if (!label_col || img_cols.empty() || aud_cols.empty())
    throw CsvError(CsvError::Kind::header, 0, t.name + ": needs img* columns, aud* columns and a label column");
  std::vector<int> labels;
  labels.reserve(t.rows.size());
  for (std::size_t r = 0; r < t.rows.size(); ++r) labels.push_back(parse_label(t.rows[r][*label_col], r + 1, class_names));
  return finish(numeric_columns(t, img_cols), numeric_columns(t, aud_cols), std::move(labels), class_names);
}

// ---------------------------------------------------------------------------
// Splitting and partitioning

void SplitSpec::validate() const {
  if (train <= 0.0 || val < 0.0 || test < 0.0) throw ConfigError("split fractions must be non-negative, train > 0");
  if (std::abs(train + val + test - 1.0) > 1e-9) throw ConfigError("split fractions must sum to 1");
}

SplitIndices split(const MultimodalDataset& dataset, const SplitSpec& spec) {
  spec.validate();
  dataset.validate();
  std::vector<IndexList> by_class(static_cast<std::size_t>(dataset.class_count));
  for (std::size_t i = 0; i < dataset.size(); ++i) by_class[static_cast<std::size_t>(dataset.labels[i])].push_back(i);

  SplitIndices out;
  for (std::size_t c = 0; c < by_class.size(); ++c) {
    auto& members = by_class[c];
    std::mt19937_64 rng(derive_seed({spec.seed, 0x5b1d, c}));
    std::shuffle(members.begin(), members.end(), rng);
    const double n = static_cast<double>(members.size());
    auto n_val = static_cast<std::size_t>(std::llround(n * spec.val));
    auto n_test = static_cast<std::size_t>(std::llround(n * spec.test));
    n_test = std::min(n_test, members.size());
    n_val = std::min(n_val, members.size() - n_test);
    const std::size_t n_train = members.size() - n_val - n_test;
    out.train.insert(out.train.end(), members.begin(), members.begin() + static_cast<std::ptrdiff_t>(n_train));
    out.val.insert(out.val.end(), members.begin() + static_cast<std::ptrdiff_t>(n_train),
                   members.begin() + static_cast<std::ptrdiff_t>(n_train + n_val));
    out.test.insert(out.test.end(), members.begin() + static_cast<std::ptrdiff_t>(n_train + n_val), members.end());
  }
  std::sort(out.train.begin(), out.train.end());
  std::sort(out.val.begin(), out.val.end());
  std::sort(out.test.begin(), out.test.end());
  return out;
}

std::vector<std::size_t> Partition::counts() const {
  std::vector<std::size_t> out;
  out.reserve(participants.size());
  for (const auto& p : participants) out.push_back(p.size());
  return out;
}

namespace {

Partition slice(std::span<const std::size_t> train, const std::vector<std::size_t>& counts, std::uint64_t seed,
                int group) {
  IndexList pool(train.begin(), train.end());
  std::mt19937_64 rng(seed);
  std::shuffle(pool.begin(), pool.end(), rng);
  Partition p;
  p.group = group;
  std::size_t offset = 0;
  for (std::size_t count : counts) {
    IndexList mine(pool.begin() + static_cast<std::ptrdiff_t>(offset),
                   pool.begin() + static_cast<std::ptrdiff_t>(offset + count));
    std::sort(mine.begin(), mine.end());
    p.participants.push_back(std::move(mine));
    offset += count;
  }
  return p;
}

}  // namespace

Partition partition_balanced(std::span<const std::size_t> train, int participants, std::uint64_t seed) {
  if (participants < 1) throw ConfigError("need at least one participant");
  const auto n = static_cast<std::size_t>(participants);
  if (train.size() < n)
    throw ConfigError("cannot give " + std::to_string(n) + " participants a sample each from " +
                      std::to_string(train.size()) + " training samples");
  std::vector<std::size_t> counts(n, train.size() / n);
  for (std::size_t k = 0; k < train.size() % n; ++k) ++counts[k];
  return slice(train, counts, derive_seed({seed, 0xba1a}), 0);
}

std::vector<std::size_t> random_composition(std::size_t total, int parts, std::size_t min_count, std::uint64_t seed) {
  if (parts < 1) throw ConfigError("need at least one participant");
  const auto n = static_cast<std::size_t>(parts);
  if (min_count * n > total)
    throw ConfigError("min_count " + std::to_string(min_count) + " times " + std::to_string(n) +
                      " participants exceeds " + std::to_string(total) + " samples");
  const std::size_t free = total - min_count * n;
  // Stars and bars: n-1 bars among free + n-1 slots.
  const std::size_t slots = free + n - 1;
  std::vector<std::size_t> positions(slots);
  std::iota(positions.begin(), positions.end(), 0);
  std::mt19937_64 rng(seed);
  for (std::size_t k = 0; k + 1 < n; ++k) {
    std::uniform_int_distribution<std::size_t> pick(k, slots - 1);
    std::swap(positions[k], positions[pick(rng)]);
  }
  std::vector<std::size_t> bars(positions.begin(), positions.begin() + static_cast<std::ptrdiff_t>(n - 1));
  std::sort(bars.begin(), bars.end());
  std::vector<std::size_t> counts;
  counts.reserve(n);
  std::size_t prev = 0;
  for (std::size_t b : bars) {
    counts.push_back(min_count + (b - prev));
    prev = b + 1;
  }
  counts.push_back(min_count + (slots - prev));
  return counts;
}

std::vector<Partition> partition_unbalanced_paired(std::span<const IndexList> group_trains, int participants,
                                                   std::size_t min_count, std::uint64_t seed) {
  if (group_trains.empty()) throw ConfigError("no groups to partition");
  for (const auto& g : group_trains)
    if (g.size() != group_trains[0].size())
      throw ConfigError("paired unbalanced partitioning needs equal training sizes across groups");
  const auto counts = random_composition(group_trains[0].size(), participants, min_count, derive_seed({seed, 0xc0}));
  std::vector<Partition> out;
  for (std::size_t g = 0; g < group_trains.size(); ++g)
    out.push_back(slice(group_trains[g], counts, derive_seed({seed, 0xd1, g}), static_cast<int>(g)));
  return out;
}

std::vector<Partition> partition_unbalanced_random(std::span<const IndexList> group_trains, int participants,
                                                   std::size_t min_count, std::uint64_t seed) {
  std::vector<Partition> out;
  for (std::size_t g = 0; g < group_trains.size(); ++g) {
    const auto counts = random_composition(group_trains[g].size(), participants, min_count, derive_seed({seed, 0xc1, g}));
    out.push_back(slice(group_trains[g], counts, derive_seed({seed, 0xd1, g}), static_cast<int>(g)));
  }
  return out;
}

}  // namespace mmfl
