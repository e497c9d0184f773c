#include "ernn/checkpoint.hpp"

#include <charconv>
#include <fstream>
#include <istream>
#include <ostream>
#include <sstream>
#include <string>

#include "ernn/errors.hpp"

namespace ernn {

namespace {

constexpr const char* kMagic = "ernn-ckpt";
constexpr const char* kVersion = "v1";

void write_value(std::ostream& out, double v) {
  char buf[32];
  auto res = std::to_chars(buf, buf + sizeof(buf), v, std::chars_format::general, 17);
  out.write(buf, res.ptr - buf);
}

void write_block(std::ostream& out, std::string_view name, std::size_t rows, std::size_t cols,
                 std::span<const double> values) {
  out << name << ' ' << rows << ' ' << cols << '\n';
  for (std::size_t r = 0; r < rows; ++r) {
    for (std::size_t c = 0; c < cols; ++c) {
      if (c) out << ' ';
      write_value(out, values[r * cols + c]);
    }
    out << '\n';
  }
}

struct Reader {
  std::istream& in;
  std::size_t line_no = 0;

  std::string next_line() {
    std::string line;
    ++line_no;
    if (!std::getline(in, line)) fail("unexpected end of file");
    if (!line.empty() && line.back() == '\r') line.pop_back();
    return line;
  }

  [[noreturn]] void fail(const std::string& what) const {
    throw FormatError("checkpoint line " + std::to_string(line_no) + ": " + what);
  }

  void read_block(std::string_view name, std::size_t rows, std::size_t cols,
                  std::span<double> dest) {
    std::istringstream header(next_line());
    std::string label;
    std::size_t r = 0, c = 0;
    if (!(header >> label >> r >> c)) fail("malformed block header");
    if (label != name) fail("expected block '" + std::string(name) + "', found '" + label + "'");
    if (r != rows || c != cols) {
      fail("block " + label + " is " + std::to_string(r) + "x" + std::to_string(c) +
           ", expected " + std::to_string(rows) + "x" + std::to_string(cols));
    }
    for (std::size_t i = 0; i < rows; ++i) {
      std::istringstream row(next_line());
      for (std::size_t j = 0; j < cols; ++j) {
        std::string tok;
        if (!(row >> tok)) fail("block " + label + " row has too few values");
        double v = 0.0;
        auto res = std::from_chars(tok.data(), tok.data() + tok.size(), v);
        if (res.ec != std::errc() || res.ptr != tok.data() + tok.size()) {
          fail("non-numeric value '" + tok + "' in block " + label);
        }
        dest[i * cols + j] = v;
      }
      std::string extra;
      if (row >> extra) fail("block " + label + " row has too many values");
    }
  }
};

}  // namespace

void write_checkpoint(std::ostream& out, const ErnnParams& p) {
  const ModelShape s = p.shape();
  out << kMagic << ' ' << kVersion << '\n';
  out << to_string(p.cell_kind) << ' ' << s.hidden << ' ' << s.input << ' ' << s.steps << ' '
      << s.inner << ' ' << s.classes << ' ' << to_string(p.activation) << '\n';
  write_block(out, "U", s.hidden, s.hidden, p.U.span());
  write_block(out, "V", s.hidden, s.hidden, p.V.span());
  write_block(out, "W", s.hidden, s.input, p.W.span());
  write_block(out, "b", s.hidden, 1, p.b.span());
  write_block(out, "eta", s.steps, s.inner, p.eta.span());
  write_block(out, "cw", s.classes, s.hidden, p.classifier_weights.span());
  write_block(out, "cb", s.classes, 1, p.classifier_bias.span());
}

void save_checkpoint(const std::filesystem::path& path, const ErnnParams& params) {
  std::ofstream out(path);
  if (!out) throw FormatError("cannot open '" + path.string() + "' for writing");
  write_checkpoint(out, params);
  if (!out) throw FormatError("failed writing '" + path.string() + "'");
}

ErnnParams read_checkpoint(std::istream& in) {
  Reader rd{in};
  {
    std::istringstream magic(rd.next_line());
    std::string m, v;
    magic >> m >> v;
    if (m != kMagic) rd.fail("not an ernn checkpoint");
    if (v != kVersion) rd.fail("unsupported checkpoint version '" + v + "'");
  }
  std::istringstream header(rd.next_line());
  std::string kind, act;
  ModelShape s;
  if (!(header >> kind >> s.hidden >> s.input >> s.steps >> s.inner >> s.classes >> act)) {
    rd.fail("malformed shape line");
  }
  ErnnParams p;
  try {
    p = ErnnParams::zeros(parse_cell_kind(kind), parse_activation(act), s);
  } catch (const std::invalid_argument& e) {
    rd.fail(e.what());
  }
  rd.read_block("U", s.hidden, s.hidden, p.U.span());
  rd.read_block("V", s.hidden, s.hidden, p.V.span());
  rd.read_block("W", s.hidden, s.input, p.W.span());
  rd.read_block("b", s.hidden, 1, p.b.span());
  rd.read_block("eta", s.steps, s.inner, p.eta.span());
  rd.read_block("cw", s.classes, s.hidden, p.classifier_weights.span());
  rd.read_block("cb", s.classes, 1, p.classifier_bias.span());
  try {
    p.validate();
  } catch (const std::exception& e) {
    throw FormatError(std::string("checkpoint: ") + e.what());
  }
  return p;
}

ErnnParams load_checkpoint(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw FormatError("cannot open checkpoint '" + path.string() + "'");
  return read_checkpoint(in);
}

}  // namespace ernn
