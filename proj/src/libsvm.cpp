#include <cstdio>
#include <fstream>
#include <istream>
#include <ostream>
#include <sstream>
#include <vector>

#include "ssqp/errors.hpp"
#include "ssqp/problems.hpp"

namespace ssqp {

namespace {

double parse_label(const std::string& tok, std::size_t line_no) {
  std::size_t used = 0;
  double v = 0;
  try {
    v = std::stod(tok, &used);
  } catch (const std::exception&) {
    throw MalformedLine(line_no, "bad label: " + tok);
  }
  if (used != tok.size()) throw MalformedLine(line_no, "bad label: " + tok);
  if (v == 1.0) return 1.0;
  if (v == -1.0 || v == 0.0) return -1.0;
  throw NonBinaryLabel(line_no, tok);
}

}  // namespace

std::pair<dmat, dvec> parse_libsvm(std::istream& in, int n_features) {
  std::vector<std::vector<std::pair<int, double>>> rows;
  std::vector<double> labels;
  int max_index = 0;

  std::string raw;
  std::size_t line_no = 0;
  while (std::getline(in, raw)) {
    ++line_no;
    const auto hash = raw.find('#');
    if (hash != std::string::npos) raw.erase(hash);
    std::istringstream ls(raw);
    std::string tok;
    if (!(ls >> tok)) continue;  // blank or comment-only line

    labels.push_back(parse_label(tok, line_no));
    std::vector<std::pair<int, double>> row;
    int prev_index = 0;
    while (ls >> tok) {
      const auto colon = tok.find(':');
      if (colon == std::string::npos || colon == 0 ||
          colon + 1 == tok.size()) {
        throw MalformedLine(line_no, "expected index:value, got: " + tok);
      }
      int idx = 0;
      double val = 0;
      std::size_t used = 0;
      try {
        idx = std::stoi(tok.substr(0, colon), &used);
        if (used != colon) throw std::invalid_argument(tok);
        val = std::stod(tok.substr(colon + 1), &used);
        if (used != tok.size() - colon - 1) throw std::invalid_argument(tok);
      } catch (const std::exception&) {
        throw MalformedLine(line_no, "bad index:value token: " + tok);
      }
      if (idx < 1) throw MalformedLine(line_no, "index below 1: " + tok);
      if (idx <= prev_index) {
        throw MalformedLine(line_no, "indices not strictly increasing: " + tok);
      }
      if (n_features >= 0 && idx > n_features) {
        throw MalformedLine(line_no, "index beyond n_features: " + tok);
      }
      prev_index = idx;
      max_index = std::max(max_index, idx);
      row.emplace_back(idx, val);
    }
    rows.push_back(std::move(row));
  }

  const int n = n_features >= 0 ? n_features : max_index;
  dmat features = dmat::Zero(static_cast<int>(rows.size()), n);
  dvec label_vec(static_cast<int>(labels.size()));
  for (std::size_t r = 0; r < rows.size(); ++r) {
    label_vec(static_cast<int>(r)) = labels[r];
    for (const auto& [idx, val] : rows[r]) {
      features(static_cast<int>(r), idx - 1) = val;
    }
  }
  return {std::move(features), std::move(label_vec)};
}

std::pair<dmat, dvec> parse_libsvm_file(const std::string& path,
                                        int n_features) {
  std::ifstream in(path);
  if (!in) throw UsageError("cannot open dataset: " + path);
  return parse_libsvm(in, n_features);
}

void emit_libsvm(std::ostream& out, const dmat& features, const dvec& labels) {
  if (labels.size() != features.rows()) {
    throw InvariantViolated("emit_libsvm: label count mismatch");
  }
  char buf[64];
  for (int r = 0; r < features.rows(); ++r) {
    out << (labels(r) > 0 ? "1" : "-1");
    for (int c = 0; c < features.cols(); ++c) {
      const double v = features(r, c);
      if (v == 0.0) continue;
      std::snprintf(buf, sizeof(buf), "%.17g", v);
      out << ' ' << (c + 1) << ':' << buf;
    }
    out << '\n';
  }
}

std::pair<dmat, dvec> synthetic_dataset(int n_rows, int n_cols,
                                        std::uint64_t seed) {
  if (n_rows < 0 || n_cols < 1) {
    throw UsageError("synthetic_dataset: bad dimensions");
  }
  SubStream sub = RandomStream(seed).at(0, StreamTag::kDataset);
  dmat features(n_rows, n_cols);
  for (int r = 0; r < n_rows; ++r) {
    for (int c = 0; c < n_cols; ++c) features(r, c) = sub.gaussian();
  }
  dvec separator(n_cols);
  for (int c = 0; c < n_cols; ++c) separator(c) = sub.gaussian();
  dvec labels(n_rows);
  for (int r = 0; r < n_rows; ++r) {
    labels(r) = features.row(r).dot(separator) >= 0 ? 1.0 : -1.0;
  }
  return {std::move(features), std::move(labels)};
}

}  // namespace ssqp
