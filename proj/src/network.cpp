#include "wbh/network.hpp"

#include <algorithm>
#include <bit>
#include <charconv>
#include <cmath>
#include <fstream>
#include <sstream>

#include "wbh/error.hpp"
#include "wbh/rng.hpp"

namespace wbh {

void Architecture::validate() const {
  if (input_size < 8 || input_size % 8 != 0)
    throw ConfigError("Architecture: input_size must be a multiple of 8");
  for (int c : stage_channels)
    if (c < 1)
      throw ConfigError("Architecture: stage channels must be positive");
  if (anchors_per_cell < 1)
    throw ConfigError("Architecture: anchors_per_cell must be positive");
  if (num_classes < 1)
    throw ConfigError("Architecture: need at least one foreground class");
}

ParamLayout::ParamLayout(const Architecture& arch) {
  arch.validate();
  std::size_t at = 0;
  auto place = [&](std::size_t n) {
    TensorSpec t{at, n};
    at += n;
    return t;
  };
  int in_ch = 3;
  for (int s = 0; s < 3; ++s) {
    const int out_ch = arch.stage_channels[std::size_t(s)];
    conv_w[std::size_t(s)] = place(std::size_t(out_ch) * in_ch * 9);
    conv_b[std::size_t(s)] = place(std::size_t(out_ch));
    in_ch = out_ch;
  }
  conf_w = place(std::size_t(arch.conf_channels()) * in_ch);
  conf_b = place(std::size_t(arch.conf_channels()));
  loc_w = place(std::size_t(arch.loc_channels()) * in_ch);
  loc_b = place(std::size_t(arch.loc_channels()));
  total = at;
}

void ModelState::validate() const {
  arch.validate();
  anchors.validate();
  if (anchors.grid != arch.grid())
    throw ContractError("ModelState: anchor grid does not match architecture");
  if (int(anchors.shapes.size()) != arch.anchors_per_cell)
    throw ContractError("ModelState: anchor shape count does not match heads");
  if (int(classes.size()) != arch.num_classes)
    throw ContractError("ModelState: class set does not match head width");
  if (params.size() != ParamLayout(arch).total)
    throw ContractError("ModelState: parameter vector does not match layout");
}

ModelState init_model(const Architecture& arch, const AnchorConfig& anchors,
                      const ClassSet& classes, std::uint64_t seed) {
  ParamLayout layout(arch);
  ModelState m;
  m.arch = arch;
  m.anchors = anchors;
  m.classes = classes;
  m.params.assign(layout.total, 0.0);
  m.validate();
  Rng rng(seed, hash64("init"));
  auto he_fill = [&](const TensorSpec& t, std::size_t fan_in) {
    const double stddev = std::sqrt(2.0 / double(fan_in));
    for (std::size_t i = 0; i < t.size; ++i)
      m.params[t.offset + i] = stddev * rng.normal();
  };
  int in_ch = 3;
  for (int s = 0; s < 3; ++s) {
    he_fill(layout.conv_w[std::size_t(s)], std::size_t(in_ch) * 9);
    in_ch = arch.stage_channels[std::size_t(s)];
  }
  he_fill(layout.conf_w, std::size_t(in_ch));
  he_fill(layout.loc_w, std::size_t(in_ch));
  return m;
}

namespace {

// out = bias + 3x3 conv of in, pad 1, same spatial size n.  The x loop is
// contiguous so it vectorizes as a plain multiply-add sweep.
void conv3x3(const double* in, int ci_n, const double* w, const double* b,
             double* out, int co_n, int n) {
  for (int co = 0; co < co_n; ++co) {
    double* o = out + std::size_t(co) * n * n;
    std::fill(o, o + std::size_t(n) * n, b[co]);
    for (int ci = 0; ci < ci_n; ++ci) {
      const double* src = in + std::size_t(ci) * n * n;
      const double* wk = w + (std::size_t(co) * ci_n + std::size_t(ci)) * 9;
      for (int dy = -1; dy <= 1; ++dy) {
        for (int dx = -1; dx <= 1; ++dx) {
          const double wv = wk[(dy + 1) * 3 + (dx + 1)];
          const int y0 = std::max(0, -dy), y1 = n - std::max(0, dy);
          const int x0 = std::max(0, -dx), x1 = n - std::max(0, dx);
          for (int y = y0; y < y1; ++y) {
            const double* srow = src + std::size_t(y + dy) * n + dx;
            double* orow = o + std::size_t(y) * n;
            for (int x = x0; x < x1; ++x)
              orow[x] += wv * srow[x];
          }
        }
      }
    }
  }
}

// Gradients of conv3x3 with respect to weights, bias, and (optionally)
// the input.  gout has the conv-output shape; gin may be null.
void conv3x3_backward(const double* in, int ci_n, const double* w,
                      const double* gout, int co_n, int n, double* gw,
                      double* gb, double* gin) {
  for (int co = 0; co < co_n; ++co) {
    const double* g = gout + std::size_t(co) * n * n;
    double bsum = 0.0;
    for (std::size_t p = 0; p < std::size_t(n) * n; ++p)
      bsum += g[p];
    gb[co] += bsum;
    for (int ci = 0; ci < ci_n; ++ci) {
      const double* src = in + std::size_t(ci) * n * n;
      double* gsrc = gin ? gin + std::size_t(ci) * n * n : nullptr;
      const std::size_t k9 = (std::size_t(co) * ci_n + std::size_t(ci)) * 9;
      for (int dy = -1; dy <= 1; ++dy) {
        for (int dx = -1; dx <= 1; ++dx) {
          const int y0 = std::max(0, -dy), y1 = n - std::max(0, dy);
          const int x0 = std::max(0, -dx), x1 = n - std::max(0, dx);
          double acc = 0.0;
          for (int y = y0; y < y1; ++y) {
            const double* srow = src + std::size_t(y + dy) * n + dx;
            const double* grow = g + std::size_t(y) * n;
            for (int x = x0; x < x1; ++x)
              acc += grow[x] * srow[x];
          }
          gw[k9 + std::size_t((dy + 1) * 3 + (dx + 1))] += acc;
          if (gsrc) {
            const double wv = w[k9 + std::size_t((dy + 1) * 3 + (dx + 1))];
            for (int y = y0; y < y1; ++y) {
              double* srow = gsrc + std::size_t(y + dy) * n + dx;
              const double* grow = g + std::size_t(y) * n;
              for (int x = x0; x < x1; ++x)
                srow[x] += wv * grow[x];
            }
          }
        }
      }
    }
  }
}

// 2x2 stride-2 max pool; argmax records the winner's flat index in the
// input buffer (ties keep the lowest index).
void maxpool2(const double* in, int c_n, int n, double* out, int* argmax) {
  const int m = n / 2;
  for (int c = 0; c < c_n; ++c) {
    const std::size_t ibase = std::size_t(c) * n * n;
    const std::size_t obase = std::size_t(c) * m * m;
    for (int y = 0; y < m; ++y) {
      for (int x = 0; x < m; ++x) {
        std::size_t p = ibase + std::size_t(2 * y) * n + std::size_t(2 * x);
        std::size_t cand[4] = {p, p + 1, p + std::size_t(n),
                               p + std::size_t(n) + 1};
        std::size_t best = cand[0];
        for (int i = 1; i < 4; ++i)
          if (in[cand[i]] > in[best])
            best = cand[i];
        out[obase + std::size_t(y) * m + std::size_t(x)] = in[best];
        argmax[obase + std::size_t(y) * m + std::size_t(x)] = int(best);
      }
    }
  }
}

// 1x1 convolution used by both prediction heads.
void head1x1(const double* in, int ci_n, const double* w, const double* b,
             double* out, int co_n, int g) {
  const std::size_t hw = std::size_t(g) * g;
  for (int co = 0; co < co_n; ++co) {
    double* o = out + std::size_t(co) * hw;
    std::fill(o, o + hw, b[co]);
    for (int ci = 0; ci < ci_n; ++ci) {
      const double wv = w[std::size_t(co) * ci_n + std::size_t(ci)];
      const double* src = in + std::size_t(ci) * hw;
      for (std::size_t p = 0; p < hw; ++p)
        o[p] += wv * src[p];
    }
  }
}

void head1x1_backward(const double* in, int ci_n, const double* w,
                      const double* gout, int co_n, int g, double* gw,
                      double* gb, double* gin) {
  const std::size_t hw = std::size_t(g) * g;
  for (int co = 0; co < co_n; ++co) {
    const double* go = gout + std::size_t(co) * hw;
    double bsum = 0.0;
    for (std::size_t p = 0; p < hw; ++p)
      bsum += go[p];
    gb[co] += bsum;
    for (int ci = 0; ci < ci_n; ++ci) {
      const double* src = in + std::size_t(ci) * hw;
      double* gsrc = gin + std::size_t(ci) * hw;
      const double wv = w[std::size_t(co) * ci_n + std::size_t(ci)];
      double acc = 0.0;
      for (std::size_t p = 0; p < hw; ++p) {
        acc += go[p] * src[p];
        gsrc[p] += wv * go[p];
      }
      gw[std::size_t(co) * ci_n + std::size_t(ci)] += acc;
    }
  }
}

} // namespace

HeadOutput forward(const ModelState& model, const Image& img,
                   ForwardCache* cache) {
  const Architecture& a = model.arch;
  ParamLayout layout(a);
  if (model.params.size() != layout.total)
    throw ContractError("forward: parameter vector does not match layout");
  if (img.width != a.input_size || img.height != a.input_size)
    throw ContractError("forward: image does not match network input size");

  ForwardCache local;
  ForwardCache& c = cache ? *cache : local;

  const int S = a.input_size;
  c.input.resize(std::size_t(3) * S * S);
  for (int ch = 0; ch < 3; ++ch)
    for (int y = 0; y < S; ++y)
      for (int x = 0; x < S; ++x)
        c.input[(std::size_t(ch) * S + std::size_t(y)) * S + std::size_t(x)] =
            img.pixels[(std::size_t(y) * S + std::size_t(x)) * 3 +
                       std::size_t(ch)] -
            0.5;

  const double* p = model.params.data();
  const double* stage_in = c.input.data();
  int in_ch = 3;
  int n = S;
  for (int s = 0; s < 3; ++s) {
    const int out_ch = a.stage_channels[std::size_t(s)];
    auto& relu = c.relu[std::size_t(s)];
    relu.resize(std::size_t(out_ch) * n * n);
    conv3x3(stage_in, in_ch, p + layout.conv_w[std::size_t(s)].offset,
            p + layout.conv_b[std::size_t(s)].offset, relu.data(), out_ch, n);
    for (double& v : relu)
      v = v > 0.0 ? v : 0.0;
    const int m = n / 2;
    auto& pool = c.pool[std::size_t(s)];
    auto& arg = c.argmax[std::size_t(s)];
    pool.resize(std::size_t(out_ch) * m * m);
    arg.resize(pool.size());
    maxpool2(relu.data(), out_ch, n, pool.data(), arg.data());
    stage_in = pool.data();
    in_ch = out_ch;
    n = m;
  }

  const int g = a.grid();
  const int K = a.num_classes + 1;
  const int A = a.anchors_per_cell;
  std::vector<double> conf_map(std::size_t(a.conf_channels()) * g * g);
  std::vector<double> loc_map(std::size_t(a.loc_channels()) * g * g);
  head1x1(stage_in, in_ch, p + layout.conf_w.offset, p + layout.conf_b.offset,
          conf_map.data(), a.conf_channels(), g);
  head1x1(stage_in, in_ch, p + layout.loc_w.offset, p + layout.loc_b.offset,
          loc_map.data(), a.loc_channels(), g);

  // Rearrange channel-planar head maps into the per-anchor rows the loss
  // and decoder consume; channel = shape * (K or 4) + slot.
  HeadOutput out;
  out.conf.resize(std::size_t(a.num_anchors()) * K);
  out.loc.resize(std::size_t(a.num_anchors()) * 4);
  for (int gy = 0; gy < g; ++gy)
    for (int gx = 0; gx < g; ++gx) {
      const std::size_t cell = std::size_t(gy) * g + std::size_t(gx);
      for (int sh = 0; sh < A; ++sh) {
        const std::size_t anchor = cell * A + std::size_t(sh);
        for (int k = 0; k < K; ++k)
          out.conf[anchor * K + std::size_t(k)] =
              conf_map[(std::size_t(sh * K + k) * g + std::size_t(gy)) * g +
                       std::size_t(gx)];
        for (int k = 0; k < 4; ++k)
          out.loc[anchor * 4 + std::size_t(k)] =
              loc_map[(std::size_t(sh * 4 + k) * g + std::size_t(gy)) * g +
                      std::size_t(gx)];
      }
    }
  return out;
}

void backward(const ModelState& model, const ForwardCache& cache,
              std::span<const double> conf_grad,
              std::span<const double> loc_grad, std::span<double> grad) {
  const Architecture& a = model.arch;
  ParamLayout layout(a);
  if (model.params.size() != layout.total || grad.size() != layout.total)
    throw ContractError("backward: parameter/gradient size mismatch");
  const int g = a.grid();
  const int K = a.num_classes + 1;
  const int A = a.anchors_per_cell;
  if (conf_grad.size() != std::size_t(a.num_anchors()) * K ||
      loc_grad.size() != std::size_t(a.num_anchors()) * 4)
    throw ContractError("backward: head gradient size mismatch");

  // Scatter per-anchor gradients back into channel-planar head maps.
  std::vector<double> gconf_map(std::size_t(a.conf_channels()) * g * g);
  std::vector<double> gloc_map(std::size_t(a.loc_channels()) * g * g);
  for (int gy = 0; gy < g; ++gy)
    for (int gx = 0; gx < g; ++gx) {
      const std::size_t cell = std::size_t(gy) * g + std::size_t(gx);
      for (int sh = 0; sh < A; ++sh) {
        const std::size_t anchor = cell * A + std::size_t(sh);
        for (int k = 0; k < K; ++k)
          gconf_map[(std::size_t(sh * K + k) * g + std::size_t(gy)) * g +
                    std::size_t(gx)] = conf_grad[anchor * K + std::size_t(k)];
        for (int k = 0; k < 4; ++k)
          gloc_map[(std::size_t(sh * 4 + k) * g + std::size_t(gy)) * g +
                   std::size_t(gx)] = loc_grad[anchor * 4 + std::size_t(k)];
      }
    }

  const double* p = model.params.data();
  const double* pool3 = cache.pool[2].data();
  const int c3 = a.stage_channels[2];
  std::vector<double> gpool(std::size_t(c3) * g * g, 0.0);
  head1x1_backward(pool3, c3, p + layout.conf_w.offset, gconf_map.data(),
                   a.conf_channels(), g, grad.data() + layout.conf_w.offset,
                   grad.data() + layout.conf_b.offset, gpool.data());
  head1x1_backward(pool3, c3, p + layout.loc_w.offset, gloc_map.data(),
                   a.loc_channels(), g, grad.data() + layout.loc_w.offset,
                   grad.data() + layout.loc_b.offset, gpool.data());

  for (int s = 2; s >= 0; --s) {
    const auto& relu = cache.relu[std::size_t(s)];
    const auto& arg = cache.argmax[std::size_t(s)];
    std::vector<double> gconv(relu.size(), 0.0);
    for (std::size_t j = 0; j < arg.size(); ++j)
      gconv[std::size_t(arg[j])] += gpool[j];
    for (std::size_t i = 0; i < gconv.size(); ++i)
      if (!(relu[i] > 0.0))
        gconv[i] = 0.0;

    const int out_ch = a.stage_channels[std::size_t(s)];
    const int in_ch = s == 0 ? 3 : a.stage_channels[std::size_t(s - 1)];
    const double* in = s == 0 ? cache.input.data()
                              : cache.pool[std::size_t(s - 1)].data();
    const int n = a.input_size >> s;
    std::vector<double> gin;
    if (s > 0)
      gin.assign(std::size_t(in_ch) * n * n, 0.0);
    conv3x3_backward(in, in_ch, p + layout.conv_w[std::size_t(s)].offset,
                     gconv.data(), out_ch, n,
                     grad.data() + layout.conv_w[std::size_t(s)].offset,
                     grad.data() + layout.conv_b[std::size_t(s)].offset,
                     s > 0 ? gin.data() : nullptr);
    gpool = std::move(gin);
  }
}

namespace {

void pack_le64(std::uint64_t v, unsigned char* out) {
  for (int i = 0; i < 8; ++i)
    out[i] = (unsigned char)((v >> (8 * i)) & 0xff);
}

std::uint64_t unpack_le64(const unsigned char* in) {
  std::uint64_t v = 0;
  for (int i = 0; i < 8; ++i)
    v |= std::uint64_t(in[i]) << (8 * i);
  return v;
}

std::string hex16(std::uint64_t v) {
  char buf[17];
  static const char* digits = "0123456789abcdef";
  for (int i = 15; i >= 0; --i) {
    buf[i] = digits[v & 0xf];
    v >>= 4;
  }
  buf[16] = '\0';
  return buf;
}

// Shortest decimal that round-trips the double exactly.
std::string fmt_double(double v) {
  char buf[32];
  auto [end, ec] = std::to_chars(buf, buf + sizeof(buf), v);
  if (ec != std::errc{})
    throw ContractError("fmt_double: value does not format");
  return std::string(buf, end);
}

} // namespace

void save_model(const ModelState& model, const std::string& path) {
  model.validate();
  std::vector<unsigned char> bytes(model.params.size() * 8);
  for (std::size_t i = 0; i < model.params.size(); ++i)
    pack_le64(std::bit_cast<std::uint64_t>(model.params[i]),
              bytes.data() + i * 8);
  const std::uint64_t sum = hash64(std::string_view(
      reinterpret_cast<const char*>(bytes.data()), bytes.size()));

  std::ofstream f(path, std::ios::binary);
  if (!f)
    throw IoError("save_model: cannot open " + path);
  const Architecture& a = model.arch;
  f << "wbh-model v1\n";
  f << "arch " << a.input_size << ' ' << a.stage_channels[0] << ' '
    << a.stage_channels[1] << ' ' << a.stage_channels[2] << ' '
    << a.anchors_per_cell << ' ' << a.num_classes << '\n';
  f << "anchors " << model.anchors.grid << ' '
    << fmt_double(model.anchors.pos_iou) << ' '
    << fmt_double(model.anchors.variance_center) << ' '
    << fmt_double(model.anchors.variance_size);
  for (const AnchorShape& s : model.anchors.shapes)
    f << ' ' << fmt_double(s.scale) << ' ' << fmt_double(s.aspect);
  f << '\n';
  f << "classes";
  for (const std::string& n : model.classes.names())
    f << ' ' << n;
  f << '\n';
  f << "step " << model.step << '\n';
  f << "params " << model.params.size() << '\n';
  f.write(reinterpret_cast<const char*>(bytes.data()),
          std::streamsize(bytes.size()));
  f << "\nchecksum " << hex16(sum) << '\n';
  if (!f)
    throw IoError("save_model: write failed for " + path);
}

ModelState load_model(const std::string& path) {
  std::ifstream f(path, std::ios::binary);
  if (!f)
    throw IoError("load_model: cannot open " + path);
  std::string line;
  if (!std::getline(f, line) || line != "wbh-model v1")
    throw VersionError("load_model: " + path +
                       " is not a wbh-model v1 checkpoint");

  ModelState m;
  if (!std::getline(f, line))
    throw ParseError("load_model: missing arch line", 0);
  {
    std::istringstream ss(line);
    std::string tag;
    Architecture& a = m.arch;
    if (!(ss >> tag >> a.input_size >> a.stage_channels[0] >>
          a.stage_channels[1] >> a.stage_channels[2] >> a.anchors_per_cell >>
          a.num_classes) ||
        tag != "arch")
      throw ParseError("load_model: malformed arch line", 0);
  }
  if (!std::getline(f, line))
    throw ParseError("load_model: missing anchors line", 0);
  {
    std::istringstream ss(line);
    std::string tag;
    AnchorConfig& ac = m.anchors;
    if (!(ss >> tag >> ac.grid >> ac.pos_iou >> ac.variance_center >>
          ac.variance_size) ||
        tag != "anchors")
      throw ParseError("load_model: malformed anchors line", 0);
    ac.shapes.clear();
    AnchorShape s;
    while (ss >> s.scale >> s.aspect)
      ac.shapes.push_back(s);
    if (int(ac.shapes.size()) != m.arch.anchors_per_cell)
      throw ParseError("load_model: anchor shapes do not match arch", 0);
  }
  if (!std::getline(f, line))
    throw ParseError("load_model: missing classes line", 0);
  {
    std::istringstream ss(line);
    std::string tag;
    if (!(ss >> tag) || tag != "classes")
      throw ParseError("load_model: malformed classes line", 0);
    std::vector<std::string> names;
    std::string n;
    while (ss >> n)
      names.push_back(n);
    m.classes = ClassSet(std::move(names));
  }
  if (!std::getline(f, line))
    throw ParseError("load_model: missing step line", 0);
  {
    std::istringstream ss(line);
    std::string tag;
    if (!(ss >> tag >> m.step) || tag != "step")
      throw ParseError("load_model: malformed step line", 0);
  }
  std::size_t count = 0;
  if (!std::getline(f, line))
    throw ParseError("load_model: missing params line", 0);
  {
    std::istringstream ss(line);
    std::string tag;
    if (!(ss >> tag >> count) || tag != "params")
      throw ParseError("load_model: malformed params line", 0);
  }
  ParamLayout layout(m.arch);
  if (count != layout.total)
    throw ParseError("load_model: parameter count does not match arch", 0);

  std::vector<unsigned char> bytes(count * 8);
  f.read(reinterpret_cast<char*>(bytes.data()), std::streamsize(bytes.size()));
  if (std::size_t(f.gcount()) != bytes.size())
    throw IoError("load_model: truncated parameter block in " + path);
  const std::uint64_t sum = hash64(std::string_view(
      reinterpret_cast<const char*>(bytes.data()), bytes.size()));

  if (!std::getline(f, line) || !line.empty())
    throw ParseError("load_model: expected blank line after parameters", 0);
  if (!std::getline(f, line))
    throw ParseError("load_model: missing checksum line", 0);
  std::istringstream ss(line);
  std::string tag, hex;
  if (!(ss >> tag >> hex) || tag != "checksum")
    throw ParseError("load_model: malformed checksum line", 0);
  if (hex != hex16(sum))
    throw ChecksumError("load_model: checksum mismatch in " + path);

  m.params.resize(count);
  for (std::size_t i = 0; i < count; ++i)
    m.params[i] = std::bit_cast<double>(unpack_le64(bytes.data() + i * 8));
  m.validate();
  return m;
}

} // namespace wbh
