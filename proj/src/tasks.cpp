#include "lowdim/tasks.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <map>
#include <set>
#include <sstream>
#include <stdexcept>

#include "lowdim/rng.hpp"

namespace lowdim {

using nlohmann::json;

void Dataset::push(const double* row, int label) {
  x.insert(x.end(), row, row + dim);
  y.push_back(label);
}

void Dataset::validate() const {
  if (x.size() != y.size() * dim) throw std::invalid_argument("Dataset: x/y size mismatch");
  for (int label : y)
    if (label < 0 || static_cast<std::size_t>(label) >= classes)
      throw std::invalid_argument("Dataset: label out of range");
}

std::size_t TaskSet::samples_per_task() const {
  std::size_t m = tasks.empty() ? 0 : tasks.front().train.size();
  for (const auto& t : tasks) m = std::min(m, t.train.size());
  return m;
}

void TaskSet::validate() const {
  for (const auto& t : tasks) {
    t.train.validate();
    t.val.validate();
    t.test.validate();
  }
}

namespace {

Dataset subset(const Dataset& pool, const std::vector<std::size_t>& idx, std::size_t from,
               std::size_t count) {
  Dataset d;
  d.dim = pool.dim;
  d.classes = pool.classes;
  d.x.reserve(count * pool.dim);
  d.y.reserve(count);
  for (std::size_t i = from; i < from + count; ++i)
    d.push(pool.x.data() + idx[i] * pool.dim, pool.y[idx[i]]);
  return d;
}

// Stratified index order: per-class shuffles interleaved so any prefix is
// close to class-balanced.
std::vector<std::size_t> stratified_order(const Dataset& pool, RngStream& rng) {
  std::vector<std::vector<std::size_t>> per_class(pool.classes);
  for (std::size_t i = 0; i < pool.size(); ++i)
    per_class[static_cast<std::size_t>(pool.y[i])].push_back(i);
  for (auto& c : per_class) {
    const auto perm = random_permutation(rng, c.size());
    std::vector<std::size_t> shuffled(c.size());
    for (std::size_t i = 0; i < c.size(); ++i) shuffled[i] = c[perm[i]];
    c = std::move(shuffled);
  }
  std::vector<std::size_t> order;
  order.reserve(pool.size());
  for (std::size_t round = 0; order.size() < pool.size(); ++round)
    for (auto& c : per_class)
      if (round < c.size()) order.push_back(c[round]);
  return order;
}

}  // namespace

Task split_pool(const Dataset& pool, std::size_t m, std::uint64_t seed) {
  const std::size_t val_n = (2 * m) / 7;
  const std::size_t test_n = m / 7;
  if (pool.size() < m + val_n + test_n)
    throw std::invalid_argument("split_pool: pool of " + std::to_string(pool.size()) +
                                " examples cannot supply m=" + std::to_string(m) +
                                " plus held-out splits");
  RngStream rng(seed);
  const auto order = stratified_order(pool, rng);
  Task t;
  t.train = subset(pool, order, 0, m);
  t.val = subset(pool, order, m, val_n);
  t.test = subset(pool, order, m + val_n, test_n);
  return t;
}

Dataset gen_blobs(std::size_t count, std::size_t dim, std::size_t classes, double spread,
                  std::uint64_t seed) {
  if (classes < 2 || dim == 0 || count == 0)
    throw std::invalid_argument("gen_blobs: need count >= 1, dim >= 1, classes >= 2");
  const RngStream root(seed);
  const Tensor centers = gaussian(root.derive(1), classes, dim);
  const RngStream noise = root.derive(2);
  Dataset d;
  d.dim = dim;
  d.classes = classes;
  d.x.resize(count * dim);
  d.y.resize(count);
  for (std::size_t i = 0; i < count; ++i) {
    const std::size_t cls = i % classes;  // balanced by construction
    for (std::size_t jj = 0; jj < dim; ++jj)
      d.x[i * dim + jj] = centers(cls, jj) + spread * noise.normal_at(i * dim + jj);
    d.y[i] = static_cast<int>(cls);
  }
  return d;
}

TaskSet gen_permuted_labels(const Dataset& base, std::size_t n, std::size_t m,
                            std::uint64_t seed) {
  base.validate();
  TaskSet ts;
  ts.input_dim = base.dim;
  ts.classes = base.classes;
  const RngStream root(seed);
  for (std::size_t t = 0; t < n; ++t) {
    const RngStream tr = root.derive(1000 + t);
    RngStream perm_rng = tr.derive(1);
    const auto perm = random_permutation(perm_rng, base.classes);
    Task task = split_pool(base, m, tr.derive(2).seed());
    for (Dataset* split : {&task.train, &task.val, &task.test})
      for (int& label : split->y) label = static_cast<int>(perm[static_cast<std::size_t>(label)]);
    task.provenance = json{{"generator", "permuted_labels"},
                           {"seed", seed},
                           {"task", t},
                           {"permutation", perm}};
    ts.tasks.push_back(std::move(task));
  }
  return ts;
}

TaskSet gen_shuffled_pixels(const Dataset& base, std::size_t n, std::size_t m,
                            std::size_t pixels_to_shuffle, std::uint64_t seed) {
  base.validate();
  if (pixels_to_shuffle > base.dim)
    throw std::invalid_argument("gen_shuffled_pixels: cannot shuffle " +
                                std::to_string(pixels_to_shuffle) + " of " +
                                std::to_string(base.dim) + " coordinates");
  TaskSet ts;
  ts.input_dim = base.dim;
  ts.classes = base.classes;
  const RngStream root(seed);
  for (std::size_t t = 0; t < n; ++t) {
    const RngStream tr = root.derive(2000 + t);
    // random subset of coordinates, then a permutation of that subset
    RngStream pick = tr.derive(1);
    const auto coords = random_permutation(pick, base.dim);
    std::vector<std::size_t> chosen(coords.begin(),
                                    coords.begin() + static_cast<std::ptrdiff_t>(pixels_to_shuffle));
    RngStream shuf = tr.derive(2);
    const auto inner = random_permutation(shuf, pixels_to_shuffle);

    Task task = split_pool(base, m, tr.derive(3).seed());
    std::vector<double> tmp(pixels_to_shuffle);
    for (Dataset* split : {&task.train, &task.val, &task.test})
      for (std::size_t i = 0; i < split->size(); ++i) {
        double* row = split->x.data() + i * split->dim;
        for (std::size_t j = 0; j < pixels_to_shuffle; ++j) tmp[j] = row[chosen[j]];
        for (std::size_t j = 0; j < pixels_to_shuffle; ++j) row[chosen[j]] = tmp[inner[j]];
      }
    task.provenance = json{{"generator", "shuffled_pixels"},
                           {"seed", seed},
                           {"task", t},
                           {"pixels", pixels_to_shuffle},
                           {"chosen", chosen},
                           {"inner", inner}};
    ts.tasks.push_back(std::move(task));
  }
  return ts;
}

namespace {

// Rows of an orthonormal rank x dim matrix via Gram-Schmidt on normal draws.
std::vector<std::vector<double>> orthonormal_rows(const RngStream& rng, std::size_t rank,
                                                  std::size_t dim) {
  if (rank > dim) throw std::invalid_argument("orthonormal_rows: rank > dim");
  std::vector<std::vector<double>> rows;
  std::size_t draw = 0;
  while (rows.size() < rank) {
    std::vector<double> v(dim);
    for (std::size_t j = 0; j < dim; ++j) v[j] = rng.normal_at(draw * dim + j);
    ++draw;
    for (const auto& u : rows) {
      double dot = 0.0;
      for (std::size_t j = 0; j < dim; ++j) dot += u[j] * v[j];
      for (std::size_t j = 0; j < dim; ++j) v[j] -= dot * u[j];
    }
    double norm = 0.0;
    for (double x : v) norm += x * x;
    norm = std::sqrt(norm);
    if (norm < 1e-8) continue;  // degenerate draw, try the next one
    for (double& x : v) x /= norm;
    rows.push_back(std::move(v));
  }
  return rows;
}

}  // namespace

TaskSet gen_teacher_tasks(const TeacherOptions& opt, std::uint64_t seed) {
  if (opt.relatedness_rank == 0 || opt.relatedness_rank > opt.n)
    throw std::invalid_argument("gen_teacher_tasks: need 1 <= relatedness_rank <= n");
  if (opt.classes != 2)
    throw std::invalid_argument("gen_teacher_tasks: binary tasks only");
  const std::size_t rank = opt.orthogonal ? opt.n : opt.relatedness_rank;
  if (rank > opt.input_dim)
    throw std::invalid_argument("gen_teacher_tasks: rank exceeds input dimension");

  const RngStream root(seed);
  const auto span = orthonormal_rows(root.derive(1), rank, opt.input_dim);

  TaskSet ts;
  ts.input_dim = opt.input_dim;
  ts.classes = 2;
  const std::size_t total = opt.m + (2 * opt.m) / 7 + opt.m / 7;

  for (std::size_t t = 0; t < opt.n; ++t) {
    const RngStream tr = root.derive(3000 + t);

    // per-task mixing of the shared span (identity for rank 1 or orthogonal
    // teachers, where task t reads span row t); task_rotation blends between
    // identical rules and a fully random rotation, re-orthonormalized
    std::vector<std::vector<double>> mix(rank, std::vector<double>(rank, 0.0));
    for (std::size_t i = 0; i < rank; ++i) mix[i][i] = 1.0;
    if (!opt.orthogonal && rank > 1 && opt.task_rotation > 0.0) {
      const auto rot = orthonormal_rows(tr.derive(1), rank, rank);
      const double t = opt.task_rotation;
      for (std::size_t a = 0; a < rank; ++a)
        for (std::size_t b = 0; b < rank; ++b)
          mix[a][b] = (1.0 - t) * mix[a][b] + t * rot[a][b];
      // Gram-Schmidt back to orthonormal rows
      for (std::size_t a = 0; a < rank; ++a) {
        for (std::size_t p = 0; p < a; ++p) {
          double dot = 0.0;
          for (std::size_t b = 0; b < rank; ++b) dot += mix[p][b] * mix[a][b];
          for (std::size_t b = 0; b < rank; ++b) mix[a][b] -= dot * mix[p][b];
        }
        double norm = 0.0;
        for (std::size_t b = 0; b < rank; ++b) norm += mix[a][b] * mix[a][b];
        norm = std::sqrt(norm);
        for (std::size_t b = 0; b < rank; ++b) mix[a][b] /= norm;
      }
    }

    const RngStream xs = tr.derive(2);
    const RngStream flip = tr.derive(3);
    Dataset pool;
    pool.dim = opt.input_dim;
    pool.classes = 2;
    pool.x.resize(total * opt.input_dim);
    pool.y.resize(total);
    std::vector<double> z(rank);
    for (std::size_t i = 0; i < total; ++i) {
      double* row = pool.x.data() + i * opt.input_dim;
      for (std::size_t j = 0; j < opt.input_dim; ++j) row[j] = xs.normal_at(i * opt.input_dim + j);
      for (std::size_t r = 0; r < rank; ++r) {
        double dot = 0.0;
        for (std::size_t j = 0; j < opt.input_dim; ++j) dot += span[r][j] * row[j];
        z[r] = dot;
      }
      // rotate inside the span, then apply the task's decision rule
      double s;
      if (opt.orthogonal) {
        s = z[t];  // plain halfspace on the task's own direction
      } else {
        std::vector<double> zr(rank, 0.0);
        for (std::size_t a = 0; a < rank; ++a)
          for (std::size_t b = 0; b < rank; ++b) zr[a] += mix[a][b] * z[b];
        s = zr[0];
        if (rank >= 3) s += opt.nonlinearity * zr[1] * zr[2];
        else if (rank == 2) s += opt.nonlinearity * (zr[1] * zr[1] - 1.0);
      }
      int label = s > 0.0 ? 1 : 0;
      if (opt.orthogonal && opt.margin > 0.0) {
        const double shift = (label == 1 ? opt.margin : -opt.margin);
        for (std::size_t j = 0; j < opt.input_dim; ++j) row[j] += shift * span[t][j];
      }
      if (opt.noise > 0.0 && flip.uniform_at(i) < opt.noise) label = 1 - label;
      pool.y[i] = label;
    }
    Task task = split_pool(pool, opt.m, tr.derive(4).seed());
    task.provenance = json{{"generator", "teacher"},
                           {"seed", seed},
                           {"task", t},
                           {"rank", rank},
                           {"orthogonal", opt.orthogonal},
                           {"noise", opt.noise},
                           {"nonlinearity", opt.nonlinearity},
                           {"task_rotation", opt.task_rotation},
                           {"margin", opt.margin}};
    ts.tasks.push_back(std::move(task));
  }
  return ts;
}

// --- idx --------------------------------------------------------------------

namespace {

std::uint32_t read_be32(std::istream& is, std::size_t& offset) {
  std::uint32_t v = 0;
  for (int i = 0; i < 4; ++i) {
    const int c = is.get();
    if (c == EOF) throw std::runtime_error("idx: truncated at byte " + std::to_string(offset));
    v = (v << 8) | static_cast<std::uint32_t>(static_cast<unsigned char>(c));
    ++offset;
  }
  return v;
}

void write_be32(std::ostream& os, std::uint32_t v) {
  for (int i = 3; i >= 0; --i) os.put(static_cast<char>((v >> (8 * i)) & 0xFF));
}

}  // namespace

Dataset load_idx(const std::string& images_path, const std::string& labels_path) {
  std::ifstream img(images_path, std::ios::binary);
  if (!img) throw std::runtime_error("idx: cannot open " + images_path);
  std::size_t off = 0;
  const std::uint32_t magic = read_be32(img, off);
  if (magic != 0x00000803)
    throw std::runtime_error("idx: bad image magic at byte 0 (got " + std::to_string(magic) +
                             ", want 2051)");
  const std::uint32_t count = read_be32(img, off);
  const std::uint32_t rows = read_be32(img, off);
  const std::uint32_t cols = read_be32(img, off);

  std::ifstream lab(labels_path, std::ios::binary);
  if (!lab) throw std::runtime_error("idx: cannot open " + labels_path);
  std::size_t loff = 0;
  const std::uint32_t lmagic = read_be32(lab, loff);
  if (lmagic != 0x00000801)
    throw std::runtime_error("idx: bad label magic at byte 0 (got " + std::to_string(lmagic) +
                             ", want 2049)");
  const std::uint32_t lcount = read_be32(lab, loff);
  if (lcount != count)
    throw std::runtime_error("idx: image/label count mismatch (" + std::to_string(count) + " vs " +
                             std::to_string(lcount) + ")");

  Dataset d;
  d.dim = static_cast<std::size_t>(rows) * cols;
  d.x.resize(static_cast<std::size_t>(count) * d.dim);
  d.y.resize(count);
  std::vector<char> buf(d.dim);
  int max_label = 0;
  for (std::uint32_t i = 0; i < count; ++i) {
    img.read(buf.data(), static_cast<std::streamsize>(d.dim));
    if (!img) throw std::runtime_error("idx: truncated image payload at byte " +
                                       std::to_string(off + static_cast<std::size_t>(i) * d.dim));
    for (std::size_t j = 0; j < d.dim; ++j)
      d.x[i * d.dim + j] = static_cast<unsigned char>(buf[j]) / 255.0;
    const int c = lab.get();
    if (c == EOF) throw std::runtime_error("idx: truncated label payload at byte " +
                                           std::to_string(loff + i));
    d.y[i] = static_cast<unsigned char>(c);
    max_label = std::max(max_label, d.y[i]);
  }
  d.classes = static_cast<std::size_t>(max_label) + 1;
  return d;
}

void write_idx_images(const std::string& path, const std::vector<std::uint8_t>& pixels,
                      std::size_t count, std::size_t rows, std::size_t cols) {
  if (pixels.size() != count * rows * cols)
    throw std::invalid_argument("write_idx_images: payload size mismatch");
  std::ofstream os(path, std::ios::binary);
  if (!os) throw std::runtime_error("idx: cannot open " + path + " for writing");
  write_be32(os, 0x00000803);
  write_be32(os, static_cast<std::uint32_t>(count));
  write_be32(os, static_cast<std::uint32_t>(rows));
  write_be32(os, static_cast<std::uint32_t>(cols));
  os.write(reinterpret_cast<const char*>(pixels.data()), static_cast<std::streamsize>(pixels.size()));
}

void write_idx_labels(const std::string& path, const std::vector<std::uint8_t>& labels) {
  std::ofstream os(path, std::ios::binary);
  if (!os) throw std::runtime_error("idx: cannot open " + path + " for writing");
  write_be32(os, 0x00000801);
  write_be32(os, static_cast<std::uint32_t>(labels.size()));
  os.write(reinterpret_cast<const char*>(labels.data()), static_cast<std::streamsize>(labels.size()));
}

// --- csv --------------------------------------------------------------------

namespace {

std::vector<std::string> split_csv_line(const std::string& line) {
  std::vector<std::string> out;
  std::string cur;
  for (char c : line) {
    if (c == ',') {
      out.push_back(cur);
      cur.clear();
    } else if (c != '\r') {
      cur.push_back(c);
    }
  }
  out.push_back(cur);
  return out;
}

}  // namespace

Dataset load_csv(const std::string& path, const json& schema) {
  std::ifstream is(path);
  if (!is) throw std::runtime_error("csv: cannot open " + path);

  const std::string label_col = schema.at("label").get<std::string>();
  const auto feature_cols = schema.at("features").get<std::vector<std::string>>();
  std::set<std::string> categorical;
  if (schema.contains("categorical"))
    for (const auto& c : schema.at("categorical")) categorical.insert(c.get<std::string>());

  std::string line;
  if (!std::getline(is, line)) throw std::runtime_error("csv: empty file " + path);
  const auto header = split_csv_line(line);
  std::map<std::string, std::size_t> col_index;
  for (std::size_t i = 0; i < header.size(); ++i) col_index[header[i]] = i;

  auto require_col = [&](const std::string& name) {
    const auto it = col_index.find(name);
    if (it == col_index.end())
      throw std::runtime_error("csv: schema column '" + name + "' missing from header");
    return it->second;
  };
  const std::size_t label_idx = require_col(label_col);
  std::vector<std::size_t> feat_idx;
  for (const auto& f : feature_cols) feat_idx.push_back(require_col(f));

  // First pass: collect rows and category/label vocabularies.
  std::vector<std::vector<std::string>> rows;
  std::map<std::string, std::map<std::string, std::size_t>> vocab;  // col -> value -> id
  std::map<std::string, int> label_vocab;
  std::size_t line_no = 1;
  while (std::getline(is, line)) {
    ++line_no;
    if (line.empty()) continue;
    auto cells = split_csv_line(line);
    if (cells.size() != header.size())
      throw std::runtime_error("csv: line " + std::to_string(line_no) + " has " +
                               std::to_string(cells.size()) + " cells, header has " +
                               std::to_string(header.size()));
    for (std::size_t i = 0; i < feature_cols.size(); ++i) {
      const std::string& cell = cells[feat_idx[i]];
      if (cell.empty())
        throw std::runtime_error("csv: missing value in column '" + feature_cols[i] +
                                 "' at line " + std::to_string(line_no));
      if (categorical.count(feature_cols[i]))
        vocab[feature_cols[i]].emplace(cell, vocab[feature_cols[i]].size());
    }
    const std::string& lc = cells[label_idx];
    if (lc.empty())
      throw std::runtime_error("csv: missing label at line " + std::to_string(line_no));
    label_vocab.emplace(lc, static_cast<int>(label_vocab.size()));
    rows.push_back(std::move(cells));
  }
  if (rows.empty()) throw std::runtime_error("csv: no data rows in " + path);

  // Layout: numeric columns one slot each, categoricals one-hot.
  std::size_t dim = 0;
  std::vector<std::size_t> offsets(feature_cols.size());
  for (std::size_t i = 0; i < feature_cols.size(); ++i) {
    offsets[i] = dim;
    dim += categorical.count(feature_cols[i]) ? vocab[feature_cols[i]].size() : 1;
  }

  Dataset d;
  d.dim = dim;
  d.classes = label_vocab.size();
  d.x.assign(rows.size() * dim, 0.0);
  d.y.resize(rows.size());
  for (std::size_t r = 0; r < rows.size(); ++r) {
    double* out = d.x.data() + r * dim;
    for (std::size_t i = 0; i < feature_cols.size(); ++i) {
      const std::string& cell = rows[r][feat_idx[i]];
      if (categorical.count(feature_cols[i])) {
        out[offsets[i] + vocab[feature_cols[i]].at(cell)] = 1.0;
      } else {
        try {
          std::size_t pos = 0;
          out[offsets[i]] = std::stod(cell, &pos);
          if (pos != cell.size()) throw std::invalid_argument(cell);
        } catch (const std::exception&) {
          throw std::runtime_error("csv: non-numeric value '" + cell + "' in column '" +
                                   feature_cols[i] + "' at line " + std::to_string(r + 2));
        }
      }
    }
    d.y[r] = label_vocab.at(rows[r][label_idx]);
  }
  return d;
}

}  // namespace lowdim
