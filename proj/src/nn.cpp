#include "obsbench/nn.hpp"

#include <Eigen/Dense>
#include <algorithm>
#include <cmath>
#include <limits>
#include <stdexcept>

namespace obsbench::nn {

namespace {

using EMatrix =
    Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;
using MapMat = Eigen::Map<EMatrix>;
using MapConstMat = Eigen::Map<const EMatrix>;
using MapVec = Eigen::Map<Eigen::VectorXd>;
using MapConstVec = Eigen::Map<const Eigen::VectorXd>;

long long shape_product(const std::vector<int>& shape) {
  long long n = 1;
  for (int d : shape) {
    if (d <= 0) throw std::invalid_argument("tensor dimensions must be > 0");
    n *= d;
  }
  return n;
}

}  // namespace

Tensor::Tensor(std::vector<int> s) : shape(std::move(s)) {
  data.assign(static_cast<std::size_t>(shape_product(shape)), 0.0);
}

double sigmoid(double x) {
  if (x >= 0.0) {
    const double e = std::exp(-x);
    return 1.0 / (1.0 + e);
  }
  const double e = std::exp(x);
  return e / (1.0 + e);
}

double activate(Activation a, double x) {
  switch (a) {
    case Activation::identity:
      return x;
    case Activation::sigmoid:
      return sigmoid(x);
    case Activation::tanh:
      return std::tanh(x);
  }
  throw std::logic_error("unknown activation");
}

double activate_grad_from_output(Activation a, double y) {
  switch (a) {
    case Activation::identity:
      return 1.0;
    case Activation::sigmoid:
      return y * (1.0 - y);
    case Activation::tanh:
      return 1.0 - y * y;
  }
  throw std::logic_error("unknown activation");
}

std::string activation_name(Activation a) {
  switch (a) {
    case Activation::identity:
      return "identity";
    case Activation::sigmoid:
      return "sigmoid";
    case Activation::tanh:
      return "tanh";
  }
  throw std::logic_error("unknown activation");
}

Activation activation_from_name(const std::string& name) {
  if (name == "identity") return Activation::identity;
  if (name == "sigmoid") return Activation::sigmoid;
  if (name == "tanh") return Activation::tanh;
  throw std::invalid_argument("unknown activation: " + name);
}

LayerSpec LayerSpec::Conv(int fh, int fw, int cin, int cout) {
  if (fh < 1 || fw < 1 || cin < 1 || cout < 1)
    throw std::invalid_argument("conv geometry must be positive");
  LayerSpec s;
  s.kind = Kind::conv;
  s.filter_h = fh;
  s.filter_w = fw;
  s.in_channels = cin;
  s.out_channels = cout;
  return s;
}

LayerSpec LayerSpec::MaxPool(int ph, int pw) {
  if (ph < 1 || pw < 1)
    throw std::invalid_argument("pool window must be positive");
  LayerSpec s;
  s.kind = Kind::maxpool;
  s.pool_h = ph;
  s.pool_w = pw;
  return s;
}

LayerSpec LayerSpec::Dense(int in, int out, Activation act) {
  if (in < 1 || out < 1)
    throw std::invalid_argument("dense feature counts must be positive");
  LayerSpec s;
  s.kind = Kind::dense;
  s.in_features = in;
  s.out_features = out;
  s.activation = act;
  return s;
}

LayerSpec LayerSpec::Lstm(int input, int hidden, bool return_sequence) {
  if (input < 1 || hidden < 1)
    throw std::invalid_argument("lstm sizes must be positive");
  LayerSpec s;
  s.kind = Kind::lstm;
  s.input_size = input;
  s.hidden_size = hidden;
  s.return_sequence = return_sequence;
  return s;
}

LayerSpec LayerSpec::Act(Activation act) {
  LayerSpec s;
  s.kind = Kind::activation;
  s.activation = act;
  return s;
}

LayerSpec LayerSpec::Flatten() {
  LayerSpec s;
  s.kind = Kind::flatten;
  return s;
}

std::string kind_name(LayerSpec::Kind kind) {
  switch (kind) {
    case LayerSpec::Kind::conv:
      return "conv";
    case LayerSpec::Kind::maxpool:
      return "maxpool";
    case LayerSpec::Kind::dense:
      return "dense";
    case LayerSpec::Kind::lstm:
      return "lstm";
    case LayerSpec::Kind::activation:
      return "activation";
    case LayerSpec::Kind::flatten:
      return "flatten";
  }
  throw std::logic_error("unknown layer kind");
}

// --- layers -----------------------------------------------------------------

namespace {

class ConvLayer final : public Layer {
 public:
  explicit ConvLayer(const LayerSpec& spec)
      : spec_(spec),
        w_({spec.filter_h, spec.filter_w, spec.in_channels, spec.out_channels}),
        b_({spec.out_channels}),
        gw_(w_.shape),
        gb_(b_.shape) {}

  const LayerSpec& spec() const override { return spec_; }

  std::vector<int> output_shape(const std::vector<int>& in) const override {
    if (in.size() != 3) throw std::invalid_argument("conv expects (H, W, C)");
    if (in[2] != spec_.in_channels)
      throw std::invalid_argument("conv channel mismatch");
    const int oh = in[0] - spec_.filter_h + 1;
    const int ow = in[1] - spec_.filter_w + 1;
    if (oh < 1 || ow < 1)
      throw std::invalid_argument("conv input smaller than its filter");
    return {oh, ow, spec_.out_channels};
  }

  Tensor forward(const Tensor& x) override {
    const auto out_shape = output_shape(x.shape);
    x_ = x;
    Tensor y(out_shape);
    const int oh_n = out_shape[0], ow_n = out_shape[1];
    const int fh = spec_.filter_h, fw = spec_.filter_w;
    const int cin = spec_.in_channels, cout = spec_.out_channels;
    const int in_w = x.shape[1];
    const double* xd = x.data.data();
    const double* wd = w_.data.data();
    double* yd = y.data.data();
    for (int oh = 0; oh < oh_n; ++oh) {
      for (int ow = 0; ow < ow_n; ++ow) {
        double* yrow = yd + (static_cast<std::size_t>(oh) * ow_n + ow) * cout;
        for (int oc = 0; oc < cout; ++oc) yrow[oc] = b_.data[oc];
        for (int kh = 0; kh < fh; ++kh) {
          for (int kw = 0; kw < fw; ++kw) {
            const double* xrow =
                xd + (static_cast<std::size_t>(oh + kh) * in_w + (ow + kw)) *
                         cin;
            const double* wrow =
                wd + (static_cast<std::size_t>(kh) * fw + kw) * cin * cout;
            for (int ic = 0; ic < cin; ++ic) {
              const double xv = xrow[ic];
              const double* wc = wrow + static_cast<std::size_t>(ic) * cout;
              for (int oc = 0; oc < cout; ++oc) yrow[oc] += xv * wc[oc];
            }
          }
        }
      }
    }
    return y;
  }

  Tensor backward(const Tensor& dy) override {
    Tensor dx(x_.shape);
    const int oh_n = dy.shape[0], ow_n = dy.shape[1];
    const int fh = spec_.filter_h, fw = spec_.filter_w;
    const int cin = spec_.in_channels, cout = spec_.out_channels;
    const int in_w = x_.shape[1];
    const double* xd = x_.data.data();
    const double* wd = w_.data.data();
    const double* dyd = dy.data.data();
    double* dxd = dx.data.data();
    double* gwd = gw_.data.data();
    for (int oh = 0; oh < oh_n; ++oh) {
      for (int ow = 0; ow < ow_n; ++ow) {
        const double* dyrow =
            dyd + (static_cast<std::size_t>(oh) * ow_n + ow) * cout;
        for (int oc = 0; oc < cout; ++oc) gb_.data[oc] += dyrow[oc];
        for (int kh = 0; kh < fh; ++kh) {
          for (int kw = 0; kw < fw; ++kw) {
            const std::size_t in_off =
                (static_cast<std::size_t>(oh + kh) * in_w + (ow + kw)) * cin;
            const std::size_t w_off =
                (static_cast<std::size_t>(kh) * fw + kw) * cin * cout;
            for (int ic = 0; ic < cin; ++ic) {
              const double xv = xd[in_off + ic];
              const double* wc = wd + w_off + static_cast<std::size_t>(ic) * cout;
              double* gwc = gwd + w_off + static_cast<std::size_t>(ic) * cout;
              double acc = 0.0;
              for (int oc = 0; oc < cout; ++oc) {
                gwc[oc] += xv * dyrow[oc];
                acc += wc[oc] * dyrow[oc];
              }
              dxd[in_off + ic] += acc;
            }
          }
        }
      }
    }
    return dx;
  }

  std::vector<ParamRef> params() override {
    return {{"W", &w_, &gw_}, {"b", &b_, &gb_}};
  }

 private:
  LayerSpec spec_;
  Tensor w_, b_, gw_, gb_;
  Tensor x_;
};

class MaxPoolLayer final : public Layer {
 public:
  explicit MaxPoolLayer(const LayerSpec& spec) : spec_(spec) {}

  const LayerSpec& spec() const override { return spec_; }

  std::vector<int> output_shape(const std::vector<int>& in) const override {
    if (in.size() != 3) throw std::invalid_argument("maxpool expects (H, W, C)");
    const int oh = in[0] / spec_.pool_h;  // remainder rows are dropped
    const int ow = in[1] / spec_.pool_w;
    if (oh < 1 || ow < 1)
      throw std::invalid_argument("maxpool input smaller than its window");
    return {oh, ow, in[2]};
  }

  Tensor forward(const Tensor& x) override {
    const auto out_shape = output_shape(x.shape);
    in_shape_ = x.shape;
    Tensor y(out_shape);
    argmax_.assign(y.data.size(), 0);
    const int oh_n = out_shape[0], ow_n = out_shape[1], ch = out_shape[2];
    const int in_w = x.shape[1];
    for (int oh = 0; oh < oh_n; ++oh) {
      for (int ow = 0; ow < ow_n; ++ow) {
        for (int c = 0; c < ch; ++c) {
          double best = -std::numeric_limits<double>::infinity();
          std::size_t best_idx = 0;
          for (int ih = oh * spec_.pool_h; ih < (oh + 1) * spec_.pool_h; ++ih) {
            for (int iw = ow * spec_.pool_w; iw < (ow + 1) * spec_.pool_w;
                 ++iw) {
              const std::size_t idx =
                  (static_cast<std::size_t>(ih) * in_w + iw) * ch + c;
              if (x.data[idx] > best) {  // strict: ties go to the first index
                best = x.data[idx];
                best_idx = idx;
              }
            }
          }
          const std::size_t out_idx =
              (static_cast<std::size_t>(oh) * ow_n + ow) * ch + c;
          y.data[out_idx] = best;
          argmax_[out_idx] = best_idx;
        }
      }
    }
    return y;
  }

  Tensor backward(const Tensor& dy) override {
    Tensor dx(in_shape_);
    for (std::size_t i = 0; i < dy.data.size(); ++i)
      dx.data[argmax_[i]] += dy.data[i];
    return dx;
  }

 private:
  LayerSpec spec_;
  std::vector<int> in_shape_;
  std::vector<std::size_t> argmax_;
};

class ActivationLayer final : public Layer {
 public:
  explicit ActivationLayer(const LayerSpec& spec) : spec_(spec) {}

  const LayerSpec& spec() const override { return spec_; }

  std::vector<int> output_shape(const std::vector<int>& in) const override {
    return in;
  }

  Tensor forward(const Tensor& x) override {
    y_ = x;
    for (double& v : y_.data) v = activate(spec_.activation, v);
    return y_;
  }

  Tensor backward(const Tensor& dy) override {
    Tensor dx = dy;
    for (std::size_t i = 0; i < dx.data.size(); ++i)
      dx.data[i] *= activate_grad_from_output(spec_.activation, y_.data[i]);
    return dx;
  }

 private:
  LayerSpec spec_;
  Tensor y_;
};

class FlattenLayer final : public Layer {
 public:
  explicit FlattenLayer(const LayerSpec& spec) : spec_(spec) {}

  const LayerSpec& spec() const override { return spec_; }

  std::vector<int> output_shape(const std::vector<int>& in) const override {
    return {static_cast<int>(shape_product(in))};
  }

  Tensor forward(const Tensor& x) override {
    in_shape_ = x.shape;
    Tensor y = x;
    y.shape = {static_cast<int>(x.size())};
    return y;
  }

  Tensor backward(const Tensor& dy) override {
    Tensor dx = dy;
    dx.shape = in_shape_;
    return dx;
  }

 private:
  LayerSpec spec_;
  std::vector<int> in_shape_;
};

class DenseLayer final : public Layer {
 public:
  explicit DenseLayer(const LayerSpec& spec)
      : spec_(spec),
        w_({spec.in_features, spec.out_features}),
        b_({spec.out_features}),
        gw_(w_.shape),
        gb_(b_.shape) {}

  const LayerSpec& spec() const override { return spec_; }

  std::vector<int> output_shape(const std::vector<int>& in) const override {
    if (shape_product(in) != spec_.in_features)
      throw std::invalid_argument("dense input width mismatch");
    return {spec_.out_features};
  }

  Tensor forward(const Tensor& x) override {
    if (x.size() != spec_.in_features)
      throw std::invalid_argument("dense input width mismatch");
    x_ = x;
    y_ = Tensor({spec_.out_features});
    MapConstMat wm(w_.data.data(), spec_.in_features, spec_.out_features);
    MapConstVec xv(x.data.data(), spec_.in_features);
    MapVec yv(y_.data.data(), spec_.out_features);
    MapConstVec bv(b_.data.data(), spec_.out_features);
    yv.noalias() = wm.transpose() * xv;
    yv += bv;
    for (double& v : y_.data) v = activate(spec_.activation, v);
    return y_;
  }

  Tensor backward(const Tensor& dy) override {
    Eigen::VectorXd dz(spec_.out_features);
    for (int o = 0; o < spec_.out_features; ++o)
      dz(o) = dy.data[static_cast<std::size_t>(o)] *
              activate_grad_from_output(spec_.activation,
                                        y_.data[static_cast<std::size_t>(o)]);
    MapConstMat wm(w_.data.data(), spec_.in_features, spec_.out_features);
    MapMat gwm(gw_.data.data(), spec_.in_features, spec_.out_features);
    MapConstVec xv(x_.data.data(), spec_.in_features);
    MapVec gbv(gb_.data.data(), spec_.out_features);
    gwm.noalias() += xv * dz.transpose();
    gbv += dz;
    Tensor dx({spec_.in_features});
    MapVec dxv(dx.data.data(), spec_.in_features);
    dxv.noalias() = wm * dz;
    return dx;
  }

  std::vector<ParamRef> params() override {
    return {{"W", &w_, &gw_}, {"b", &b_, &gb_}};
  }

 private:
  LayerSpec spec_;
  Tensor w_, b_, gw_, gb_;
  Tensor x_, y_;
};

// Shared cell arithmetic. `cap`, when given, receives the intermediate gate
// values backpropagation-through-time needs.
struct CellCapture {
  double* v = nullptr;  // [h_prev, x], length H+F
  double* i = nullptr;
  double* f = nullptr;
  double* o = nullptr;
  double* ctil = nullptr;
  double* c = nullptr;
  double* tanhc = nullptr;
};

void lstm_core(const LstmCellParams& p, const double* x, int input_size,
               const double* h_prev, const double* c_prev, int hidden,
               double* h_out, double* c_out, CellCapture* cap) {
  const int vn = hidden + input_size;
  thread_local std::vector<double> vbuf, zbuf;
  vbuf.resize(static_cast<std::size_t>(vn));
  zbuf.resize(static_cast<std::size_t>(4 * hidden));
  std::copy(h_prev, h_prev + hidden, vbuf.begin());
  std::copy(x, x + input_size, vbuf.begin() + hidden);

  MapConstVec v(vbuf.data(), vn);
  double* zi = zbuf.data();
  double* zf = zi + hidden;
  double* zo = zf + hidden;
  double* zc = zo + hidden;
  const auto gate = [&](const Tensor& w, const Tensor& b, double* z) {
    MapConstMat wm(w.data.data(), hidden, vn);
    MapVec zv(z, hidden);
    zv.noalias() = wm * v;
    zv += MapConstVec(b.data.data(), hidden);
  };
  gate(p.Wi, p.bi, zi);
  gate(p.Wf, p.bf, zf);
  gate(p.Wo, p.bo, zo);
  gate(p.Wc, p.bc, zc);

  for (int h = 0; h < hidden; ++h) {
    const double ig = sigmoid(zi[h]);
    const double fg = sigmoid(zf[h]);
    const double og = sigmoid(zo[h]);
    const double cg = std::tanh(zc[h]);
    const double c_new = fg * c_prev[h] + ig * cg;
    const double tc = std::tanh(c_new);
    c_out[h] = c_new;
    h_out[h] = og * tc;
    if (cap) {
      cap->i[h] = ig;
      cap->f[h] = fg;
      cap->o[h] = og;
      cap->ctil[h] = cg;
      cap->c[h] = c_new;
      cap->tanhc[h] = tc;
    }
  }
  if (cap) std::copy(vbuf.begin(), vbuf.end(), cap->v);
}

class LstmLayer final : public Layer {
 public:
  explicit LstmLayer(const LayerSpec& spec) : spec_(spec) {
    const int h = spec.hidden_size;
    const int vn = h + spec.input_size;
    p_.Wi = Tensor({h, vn});
    p_.Wf = Tensor({h, vn});
    p_.Wo = Tensor({h, vn});
    p_.Wc = Tensor({h, vn});
    p_.bi = Tensor({h});
    p_.bf = Tensor({h});
    p_.bo = Tensor({h});
    p_.bc = Tensor({h});
    g_.Wi = Tensor({h, vn});
    g_.Wf = Tensor({h, vn});
    g_.Wo = Tensor({h, vn});
    g_.Wc = Tensor({h, vn});
    g_.bi = Tensor({h});
    g_.bf = Tensor({h});
    g_.bo = Tensor({h});
    g_.bc = Tensor({h});
  }

  const LayerSpec& spec() const override { return spec_; }

  std::vector<int> output_shape(const std::vector<int>& in) const override {
    if (in.size() != 2) throw std::invalid_argument("lstm expects (T, F)");
    if (in[1] != spec_.input_size)
      throw std::invalid_argument("lstm input width mismatch");
    if (spec_.return_sequence) return {in[0], spec_.hidden_size};
    return {spec_.hidden_size};
  }

  Tensor forward(const Tensor& x) override {
    const auto out_shape = output_shape(x.shape);
    const int t_n = x.shape[0];
    const int h = spec_.hidden_size;
    const int f = spec_.input_size;
    const int vn = h + f;
    steps_ = t_n;
    x_ = x;
    v_.assign(static_cast<std::size_t>(t_n) * vn, 0.0);
    for (auto* buf : {&i_, &f_, &o_, &ctil_, &c_, &tanhc_})
      buf->assign(static_cast<std::size_t>(t_n) * h, 0.0);

    std::vector<double> hbuf(static_cast<std::size_t>(h), 0.0);
    std::vector<double> cbuf(static_cast<std::size_t>(h), 0.0);
    Tensor y(out_shape);
    for (int t = 0; t < t_n; ++t) {
      CellCapture cap;
      cap.v = v_.data() + static_cast<std::size_t>(t) * vn;
      cap.i = i_.data() + static_cast<std::size_t>(t) * h;
      cap.f = f_.data() + static_cast<std::size_t>(t) * h;
      cap.o = o_.data() + static_cast<std::size_t>(t) * h;
      cap.ctil = ctil_.data() + static_cast<std::size_t>(t) * h;
      cap.c = c_.data() + static_cast<std::size_t>(t) * h;
      cap.tanhc = tanhc_.data() + static_cast<std::size_t>(t) * h;
      lstm_core(p_, x.data.data() + static_cast<std::size_t>(t) * f, f,
                hbuf.data(), cbuf.data(), h, hbuf.data(), cbuf.data(), &cap);
      if (spec_.return_sequence)
        std::copy(hbuf.begin(), hbuf.end(),
                  y.data.begin() + static_cast<std::size_t>(t) * h);
    }
    if (!spec_.return_sequence)
      std::copy(hbuf.begin(), hbuf.end(), y.data.begin());
    return y;
  }

  Tensor backward(const Tensor& dy) override {
    const int t_n = steps_;
    const int h = spec_.hidden_size;
    const int f = spec_.input_size;
    const int vn = h + f;

    Tensor dx({t_n, f});
    Eigen::VectorXd dh_next = Eigen::VectorXd::Zero(h);
    Eigen::VectorXd dc_next = Eigen::VectorXd::Zero(h);
    Eigen::VectorXd dh(h), dc(h);
    Eigen::VectorXd dpre_i(h), dpre_f(h), dpre_o(h), dpre_c(h);
    Eigen::VectorXd dv(vn);

    for (int t = t_n - 1; t >= 0; --t) {
      const std::size_t th = static_cast<std::size_t>(t) * h;
      const double* it = i_.data() + th;
      const double* ft = f_.data() + th;
      const double* ot = o_.data() + th;
      const double* ct = ctil_.data() + th;
      const double* cc = c_.data() + th;
      const double* tc = tanhc_.data() + th;
      const double* c_prev =
          t > 0 ? c_.data() + th - h : nullptr;  // zeros at sequence start

      dh = dh_next;
      if (spec_.return_sequence) {
        for (int j = 0; j < h; ++j) dh(j) += dy.data[th + j];
      } else if (t == t_n - 1) {
        for (int j = 0; j < h; ++j) dh(j) += dy.data[static_cast<std::size_t>(j)];
      }

      for (int j = 0; j < h; ++j) {
        const double d_o = dh(j) * tc[j];
        dpre_o(j) = d_o * ot[j] * (1.0 - ot[j]);
        dc(j) = dh(j) * ot[j] * (1.0 - tc[j] * tc[j]) + dc_next(j);
        dpre_i(j) = dc(j) * ct[j] * it[j] * (1.0 - it[j]);
        const double cp = c_prev ? c_prev[j] : 0.0;
        dpre_f(j) = dc(j) * cp * ft[j] * (1.0 - ft[j]);
        dpre_c(j) = dc(j) * it[j] * (1.0 - ct[j] * ct[j]);
        dc_next(j) = dc(j) * ft[j];
      }

      MapConstVec vt(v_.data() + static_cast<std::size_t>(t) * vn, vn);
      dv.setZero();
      const auto accumulate = [&](Tensor& gw, Tensor& gb, const Tensor& w,
                                  const Eigen::VectorXd& dpre) {
        MapMat gwm(gw.data.data(), h, vn);
        MapVec gbv(gb.data.data(), h);
        MapConstMat wm(w.data.data(), h, vn);
        gwm.noalias() += dpre * vt.transpose();
        gbv += dpre;
        dv.noalias() += wm.transpose() * dpre;
      };
      accumulate(g_.Wi, g_.bi, p_.Wi, dpre_i);
      accumulate(g_.Wf, g_.bf, p_.Wf, dpre_f);
      accumulate(g_.Wo, g_.bo, p_.Wo, dpre_o);
      accumulate(g_.Wc, g_.bc, p_.Wc, dpre_c);

      dh_next = dv.head(h);
      for (int j = 0; j < f; ++j)
        dx.data[static_cast<std::size_t>(t) * f + j] = dv(h + j);
    }
    return dx;
  }

  std::vector<ParamRef> params() override {
    return {{"Wi", &p_.Wi, &g_.Wi}, {"Wf", &p_.Wf, &g_.Wf},
            {"Wo", &p_.Wo, &g_.Wo}, {"Wc", &p_.Wc, &g_.Wc},
            {"bi", &p_.bi, &g_.bi}, {"bf", &p_.bf, &g_.bf},
            {"bo", &p_.bo, &g_.bo}, {"bc", &p_.bc, &g_.bc}};
  }

 private:
  LayerSpec spec_;
  LstmCellParams p_, g_;
  // caches from the last forward pass, laid out (T, dim) flat
  Tensor x_;
  int steps_ = 0;
  std::vector<double> v_, i_, f_, o_, ctil_, c_, tanhc_;
};

}  // namespace

LstmState lstm_cell(const std::vector<double>& x, const LstmState& prev,
                    const LstmCellParams& p) {
  const int hidden = p.Wi.dim(0);
  const int input = p.Wi.dim(1) - hidden;
  if (static_cast<int>(x.size()) != input)
    throw std::invalid_argument("lstm_cell input width mismatch");
  if (static_cast<int>(prev.h.size()) != hidden ||
      static_cast<int>(prev.c.size()) != hidden)
    throw std::invalid_argument("lstm_cell state width mismatch");
  LstmState next;
  next.h.assign(static_cast<std::size_t>(hidden), 0.0);
  next.c.assign(static_cast<std::size_t>(hidden), 0.0);
  lstm_core(p, x.data(), input, prev.h.data(), prev.c.data(), hidden,
            next.h.data(), next.c.data(), nullptr);
  return next;
}

std::unique_ptr<Layer> make_layer(const LayerSpec& spec) {
  switch (spec.kind) {
    case LayerSpec::Kind::conv:
      return std::make_unique<ConvLayer>(spec);
    case LayerSpec::Kind::maxpool:
      return std::make_unique<MaxPoolLayer>(spec);
    case LayerSpec::Kind::dense:
      return std::make_unique<DenseLayer>(spec);
    case LayerSpec::Kind::lstm:
      return std::make_unique<LstmLayer>(spec);
    case LayerSpec::Kind::activation:
      return std::make_unique<ActivationLayer>(spec);
    case LayerSpec::Kind::flatten:
      return std::make_unique<FlattenLayer>(spec);
  }
  throw std::logic_error("unknown layer kind");
}

Network::Network(const Network& other) { *this = other; }

Network& Network::operator=(const Network& other) {
  if (this == &other) return *this;
  layers_.clear();
  for (const auto& layer : other.layers_) layers_.push_back(make_layer(layer->spec()));
  for (std::size_t i = 0; i < layers_.size(); ++i) {
    auto dst = layers_[i]->params();
    auto src = const_cast<Layer&>(*other.layers_[i]).params();
    for (std::size_t p = 0; p < dst.size(); ++p)
      *dst[p].value = *src[p].value;
  }
  return *this;
}

void Network::add(const LayerSpec& spec) { layers_.push_back(make_layer(spec)); }

std::vector<int> Network::validate(const std::vector<int>& input_shape) const {
  std::vector<int> shape = input_shape;
  for (const auto& layer : layers_) shape = layer->output_shape(shape);
  return shape;
}

Tensor Network::forward(const Tensor& x) {
  Tensor h = x;
  for (auto& layer : layers_) h = layer->forward(h);
  return h;
}

void Network::backward(const Tensor& dloss) {
  Tensor g = dloss;
  for (auto it = layers_.rbegin(); it != layers_.rend(); ++it)
    g = (*it)->backward(g);
}

std::vector<ParamRef> Network::params() {
  std::vector<ParamRef> out;
  for (auto& layer : layers_)
    for (auto& p : layer->params()) out.push_back(p);
  return out;
}

void Network::zero_grad() {
  for (auto& p : params()) p.grad->fill(0.0);
}

long long Network::parameter_count() {
  long long n = 0;
  for (auto& p : params()) n += p.value->size();
  return n;
}

Loss mse_loss(const Tensor& pred, const Tensor& target) {
  if (pred.shape != target.shape)
    throw std::invalid_argument("mse_loss shape mismatch");
  Loss loss;
  loss.grad = Tensor(pred.shape);
  const double inv = 1.0 / static_cast<double>(pred.size());
  for (std::size_t i = 0; i < pred.data.size(); ++i) {
    const double d = pred.data[i] - target.data[i];
    loss.value += d * d * inv;
    loss.grad.data[i] = 2.0 * d * inv;
  }
  return loss;
}

double xavier_bound(const LayerSpec& spec, const std::string& param_name) {
  if (!param_name.empty() && param_name[0] == 'b') return 0.0;
  double fan_in = 0.0, fan_out = 0.0;
  switch (spec.kind) {
    case LayerSpec::Kind::dense:
      fan_in = spec.in_features;
      fan_out = spec.out_features;
      break;
    case LayerSpec::Kind::conv:
      fan_in = static_cast<double>(spec.filter_h) * spec.filter_w *
               spec.in_channels;
      fan_out = static_cast<double>(spec.filter_h) * spec.filter_w *
                spec.out_channels;
      break;
    case LayerSpec::Kind::lstm:
      fan_in = spec.hidden_size + spec.input_size;
      fan_out = spec.hidden_size;
      break;
    default:
      return 0.0;
  }
  return std::sqrt(6.0 / (fan_in + fan_out));
}

void xavier_init(Network& net, Rng& rng) {
  for (int li = 0; li < net.layer_count(); ++li) {
    Layer& layer = net.layer(li);
    for (auto& p : layer.params()) {
      const double bound = xavier_bound(layer.spec(), p.name);
      if (bound == 0.0) {
        p.value->fill(0.0);
        continue;
      }
      for (double& v : p.value->data) v = rng.uniform(-bound, bound);
    }
  }
}

Optimizer::Optimizer(const OptimizerConfig& cfg, Network& net)
    : cfg_(cfg), params_(net.params()) {
  reset();
}

void Optimizer::reset() {
  t_ = 0;
  m_.clear();
  v_.clear();
  if (cfg_.method == OptimizerConfig::Method::adam) {
    for (const auto& p : params_) {
      m_.emplace_back(p.value->data.size(), 0.0);
      v_.emplace_back(p.value->data.size(), 0.0);
    }
  }
}

void Optimizer::step(double grad_scale) {
  if (cfg_.method == OptimizerConfig::Method::sgd) {
    for (auto& p : params_)
      for (std::size_t i = 0; i < p.value->data.size(); ++i)
        p.value->data[i] -= cfg_.learning_rate * grad_scale * p.grad->data[i];
    return;
  }
  ++t_;
  const double bc1 = 1.0 - std::pow(cfg_.beta1, static_cast<double>(t_));
  const double bc2 = 1.0 - std::pow(cfg_.beta2, static_cast<double>(t_));
  for (std::size_t pi = 0; pi < params_.size(); ++pi) {
    auto& p = params_[pi];
    auto& m = m_[pi];
    auto& v = v_[pi];
    for (std::size_t i = 0; i < p.value->data.size(); ++i) {
      const double g = p.grad->data[i] * grad_scale;
      m[i] = cfg_.beta1 * m[i] + (1.0 - cfg_.beta1) * g;
      v[i] = cfg_.beta2 * v[i] + (1.0 - cfg_.beta2) * g * g;
      const double mhat = m[i] / bc1;
      const double vhat = v[i] / bc2;
      p.value->data[i] -=
          cfg_.learning_rate * mhat / (std::sqrt(vhat) + cfg_.epsilon);
    }
  }
}

// --- serialization ----------------------------------------------------------

namespace {

nlohmann::json tensor_to_json(const Tensor& t) {
  return nlohmann::json{{"shape", t.shape}, {"values", t.data}};
}

Tensor tensor_from_json(const nlohmann::json& j) {
  Tensor t(j.at("shape").get<std::vector<int>>());
  const auto values = j.at("values").get<std::vector<double>>();
  if (values.size() != t.data.size())
    throw std::invalid_argument("tensor value count does not match its shape");
  t.data = values;
  return t;
}

nlohmann::json spec_to_json(const LayerSpec& s) {
  nlohmann::json j{{"kind", kind_name(s.kind)}};
  switch (s.kind) {
    case LayerSpec::Kind::conv:
      j["filter_h"] = s.filter_h;
      j["filter_w"] = s.filter_w;
      j["in_channels"] = s.in_channels;
      j["out_channels"] = s.out_channels;
      break;
    case LayerSpec::Kind::maxpool:
      j["pool_h"] = s.pool_h;
      j["pool_w"] = s.pool_w;
      break;
    case LayerSpec::Kind::dense:
      j["in_features"] = s.in_features;
      j["out_features"] = s.out_features;
      j["activation"] = activation_name(s.activation);
      break;
    case LayerSpec::Kind::lstm:
      j["input_size"] = s.input_size;
      j["hidden_size"] = s.hidden_size;
      j["return_sequence"] = s.return_sequence;
      break;
    case LayerSpec::Kind::activation:
      j["activation"] = activation_name(s.activation);
      break;
    case LayerSpec::Kind::flatten:
      break;
  }
  return j;
}

LayerSpec spec_from_json(const nlohmann::json& j) {
  const std::string kind = j.at("kind").get<std::string>();
  if (kind == "conv")
    return LayerSpec::Conv(j.at("filter_h"), j.at("filter_w"),
                           j.at("in_channels"), j.at("out_channels"));
  if (kind == "maxpool") return LayerSpec::MaxPool(j.at("pool_h"), j.at("pool_w"));
  if (kind == "dense")
    return LayerSpec::Dense(
        j.at("in_features"), j.at("out_features"),
        activation_from_name(j.at("activation").get<std::string>()));
  if (kind == "lstm")
    return LayerSpec::Lstm(j.at("input_size"), j.at("hidden_size"),
                           j.at("return_sequence").get<bool>());
  if (kind == "activation")
    return LayerSpec::Act(
        activation_from_name(j.at("activation").get<std::string>()));
  if (kind == "flatten") return LayerSpec::Flatten();
  throw std::invalid_argument("unknown layer kind: " + kind);
}

}  // namespace

nlohmann::json network_to_json(const Network& net) {
  nlohmann::json layers = nlohmann::json::array();
  for (int i = 0; i < net.layer_count(); ++i) {
    auto& layer = const_cast<Network&>(net).layer(i);
    nlohmann::json j = spec_to_json(layer.spec());
    nlohmann::json params = nlohmann::json::object();
    for (auto& p : layer.params()) params[p.name] = tensor_to_json(*p.value);
    if (!params.empty()) j["params"] = params;
    layers.push_back(j);
  }
  return nlohmann::json{{"layers", layers}};
}

Network network_from_json(const nlohmann::json& j) {
  Network net;
  for (const auto& jl : j.at("layers")) {
    net.add(spec_from_json(jl));
    Layer& layer = net.layer(net.layer_count() - 1);
    if (jl.contains("params")) {
      for (auto& p : layer.params()) {
        Tensor loaded = tensor_from_json(jl.at("params").at(p.name));
        if (loaded.shape != p.value->shape)
          throw std::invalid_argument("loaded parameter shape mismatch for " +
                                      p.name);
        *p.value = std::move(loaded);
      }
    }
  }
  return net;
}

}  // namespace obsbench::nn
