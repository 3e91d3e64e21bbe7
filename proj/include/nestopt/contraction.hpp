#pragma once

#include <algorithm>
#include <cctype>
#include <cstdint>
#include <map>
#include <sstream>
#include <stdexcept>
#include <string>
#include <vector>

namespace nestopt {

/// Elementwise transform applied to the result during write-back.
enum class PostOp { identity, relu };

inline const char* post_op_name(PostOp op) {
  return op == PostOp::relu ? "relu" : "identity";
}

/// A tensor name plus its ordered index-variable list.
struct TensorRef {
  std::string name;
  std::vector<std::string> dims;

  bool indexes(const std::string& var) const {
    return std::find(dims.begin(), dims.end(), var) != dims.end();
  }
  bool operator==(const TensorRef&) const = default;
};

struct ParseError : std::runtime_error {
  ParseError(const std::string& msg, std::size_t col)
      : std::runtime_error(msg + " (column " + std::to_string(col + 1) + ")"),
        column(col) {}
  std::size_t column;
};

struct SemanticError : std::runtime_error {
  using std::runtime_error::runtime_error;
};

/// Two-operand einsum-style contraction over f32 elements:
///   output = post(A * B), summing over indices absent from the output.
/// Unary primitives (reductions, transposes) are expressed with an
/// all-ones second operand.
struct ContractionSpec {
  std::string name;
  TensorRef output;
  TensorRef a;
  TensorRef b;
  std::map<std::string, std::int64_t> extents;
  PostOp post_op = PostOp::identity;

  std::int64_t extent(const std::string& var) const {
    auto it = extents.find(var);
    if (it == extents.end()) throw SemanticError("undeclared index '" + var + "'");
    return it->second;
  }

  /// Indices summed over: present in an operand but absent from the output,
  /// ordered by first appearance (A's dims, then B's).
  std::vector<std::string> contraction_dims() const {
    std::vector<std::string> out;
    auto scan = [&](const TensorRef& t) {
      for (const auto& v : t.dims) {
        if (!output.indexes(v) &&
            std::find(out.begin(), out.end(), v) == out.end()) {
          out.push_back(v);
        }
      }
    };
    scan(a);
    scan(b);
    return out;
  }

  /// All index variables: output declaration order, then contraction order.
  std::vector<std::string> all_dims() const {
    std::vector<std::string> out = output.dims;
    for (auto& v : contraction_dims()) out.push_back(v);
    return out;
  }

  bool operator==(const ContractionSpec&) const = default;
};

inline void validate(const ContractionSpec& spec) {
  auto check_unique = [](const TensorRef& t) {
    for (std::size_t i = 0; i < t.dims.size(); ++i) {
      for (std::size_t j = i + 1; j < t.dims.size(); ++j) {
        if (t.dims[i] == t.dims[j]) {
          throw SemanticError("index '" + t.dims[i] + "' repeated in tensor '" +
                              t.name + "'");
        }
      }
    }
  };
  check_unique(spec.output);
  check_unique(spec.a);
  check_unique(spec.b);

  auto check_declared = [&](const TensorRef& t) {
    for (const auto& v : t.dims) {
      auto it = spec.extents.find(v);
      if (it == spec.extents.end()) {
        throw SemanticError("undeclared index '" + v + "'");
      }
      if (it->second < 1) {
        throw SemanticError("extent of '" + v + "' must be >= 1");
      }
    }
  };
  check_declared(spec.output);
  check_declared(spec.a);
  check_declared(spec.b);

  for (const auto& v : spec.output.dims) {
    if (!spec.a.indexes(v) && !spec.b.indexes(v)) {
      throw SemanticError("output index '" + v + "' appears in no operand");
    }
  }
  if (spec.output.dims.empty() && spec.a.dims.empty() && spec.b.dims.empty()) {
    throw SemanticError("contraction has no index variables");
  }
}

/// 2 flops (multiply + add) per iteration point, plus one op per output
/// element when a post-op is applied.
inline std::int64_t flop_count(const ContractionSpec& spec) {
  std::int64_t total = 2;
  for (const auto& v : spec.all_dims()) total *= spec.extent(v);
  if (spec.post_op != PostOp::identity) {
    std::int64_t out = 1;
    for (const auto& v : spec.output.dims) out *= spec.extent(v);
    total += out;
  }
  return total;
}

/// Row-major physical layout: the last declared dim has stride 1, each
/// earlier dim's stride is the product of the later extents.
struct TensorLayout {
  std::vector<std::string> dims;
  std::map<std::string, std::int64_t> base_strides;
  std::int64_t size = 1;

  std::int64_t stride(const std::string& var) const {
    auto it = base_strides.find(var);
    return it == base_strides.end() ? 0 : it->second;
  }

  static TensorLayout row_major(const std::vector<std::string>& dims,
                                const std::map<std::string, std::int64_t>& extents) {
    TensorLayout layout;
    layout.dims = dims;
    std::int64_t stride = 1;
    for (auto it = dims.rbegin(); it != dims.rend(); ++it) {
      layout.base_strides[*it] = stride;
      stride *= extents.at(*it);
    }
    layout.size = stride;
    return layout;
  }

  bool operator==(const TensorLayout&) const = default;
};

namespace detail {

class LineScanner {
 public:
  explicit LineScanner(std::string text) : s_(std::move(text)) {}

  void skip_ws() {
    while (pos_ < s_.size() && std::isspace(static_cast<unsigned char>(s_[pos_]))) ++pos_;
  }
  bool eof() {
    skip_ws();
    return pos_ >= s_.size();
  }
  char peek() {
    skip_ws();
    return pos_ < s_.size() ? s_[pos_] : '\0';
  }
  std::size_t pos() const { return pos_; }

  bool accept(char c) {
    if (peek() == c) {
      ++pos_;
      return true;
    }
    return false;
  }
  void expect(char c) {
    if (!accept(c)) {
      throw ParseError(std::string("expected '") + c + "'", pos_);
    }
  }
  void expect(const std::string& tok) {
    skip_ws();
    if (s_.compare(pos_, tok.size(), tok) != 0) {
      throw ParseError("expected '" + tok + "'", pos_);
    }
    pos_ += tok.size();
  }

  std::string ident() {
    skip_ws();
    std::size_t start = pos_;
    auto alpha = [](char c) {
      return std::isalpha(static_cast<unsigned char>(c)) || c == '_';
    };
    auto alnum = [&](char c) {
      return alpha(c) || std::isdigit(static_cast<unsigned char>(c));
    };
    if (pos_ >= s_.size() || !alpha(s_[pos_])) {
      throw ParseError("expected identifier", pos_);
    }
    while (pos_ < s_.size() && alnum(s_[pos_])) ++pos_;
    return s_.substr(start, pos_ - start);
  }

  std::int64_t integer() {
    skip_ws();
    std::size_t start = pos_;
    if (pos_ < s_.size() && (s_[pos_] == '-' || s_[pos_] == '+')) ++pos_;
    while (pos_ < s_.size() && std::isdigit(static_cast<unsigned char>(s_[pos_]))) ++pos_;
    if (pos_ == start || (pos_ == start + 1 && !std::isdigit(static_cast<unsigned char>(s_[start])))) {
      throw ParseError("expected integer", start);
    }
    return std::stoll(s_.substr(start, pos_ - start));
  }

 private:
  std::string s_;
  std::size_t pos_ = 0;
};

inline TensorRef scan_tensor_ref(LineScanner& sc) {
  TensorRef ref;
  ref.name = sc.ident();
  sc.expect('[');
  if (!sc.accept(']')) {
    ref.dims.push_back(sc.ident());
    while (sc.accept(',')) ref.dims.push_back(sc.ident());
    sc.expect(']');
  }
  return ref;
}

inline std::string default_name(const ContractionSpec& spec) {
  std::string name;
  for (const auto& v : spec.all_dims()) {
    if (!name.empty()) name += '_';
    name += v + std::to_string(spec.extent(v));
  }
  return name.empty() ? std::string("scalar") : name;
}

}  // namespace detail

/// Parses one benchmark line:
///   OUT[i,...] += IN1[i,...] * IN2[i,...] | var=int ... [post=relu]
/// `#` starts a comment; whitespace is insignificant. Extent assignments
/// for variables that appear in no tensor are accepted and ignored.
inline ContractionSpec parse_spec(const std::string& line) {
  std::string body = line.substr(0, line.find('#'));
  detail::LineScanner sc(body);

  ContractionSpec spec;
  spec.output = detail::scan_tensor_ref(sc);
  sc.expect("+=");
  spec.a = detail::scan_tensor_ref(sc);
  sc.expect('*');
  spec.b = detail::scan_tensor_ref(sc);
  if (sc.peek() == '*') {
    throw SemanticError("more than two operands");
  }
  sc.expect('|');
  while (!sc.eof()) {
    std::size_t at = sc.pos();
    std::string key = sc.ident();
    sc.expect('=');
    if (key == "post") {
      std::string val = sc.ident();
      if (val == "relu") {
        spec.post_op = PostOp::relu;
      } else if (val == "identity") {
        spec.post_op = PostOp::identity;
      } else {
        throw ParseError("unknown post-op '" + val + "'", at);
      }
    } else {
      std::int64_t ext = sc.integer();
      if (ext <= 0) {
        throw SemanticError("extent of '" + key + "' must be >= 1");
      }
      spec.extents[key] = ext;
    }
  }

  validate(spec);
  spec.name = detail::default_name(spec);
  return spec;
}

/// Parses a multi-line benchmark file (blank lines and comments skipped).
inline std::vector<ContractionSpec> parse_benchmarks(const std::string& text) {
  std::vector<ContractionSpec> specs;
  std::istringstream in(text);
  std::string line;
  while (std::getline(in, line)) {
    std::string body = line.substr(0, line.find('#'));
    if (body.find_first_not_of(" \t\r\n") == std::string::npos) continue;
    specs.push_back(parse_spec(body));
  }
  return specs;
}

}  // namespace nestopt
