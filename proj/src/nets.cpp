#include "r3/nets.hpp"

#include "json.hpp"

#include <bit>
#include <cmath>
#include <cstdint>
#include <cstring>
#include <istream>
#include <ostream>
#include <stdexcept>

namespace r3 {

using json = nlohmann::json;

std::string to_string(Activation a) {
    switch (a) {
        case Activation::Identity: return "identity";
        case Activation::Tanh: return "tanh";
        case Activation::Relu: return "relu";
    }
    return "identity";
}

Activation activation_from_string(const std::string& name) {
    if (name == "identity") return Activation::Identity;
    if (name == "tanh") return Activation::Tanh;
    if (name == "relu") return Activation::Relu;
    throw std::invalid_argument("unknown activation: " + name);
}

int Layer::input_size() const {
    return kind == LayerKind::Conv ? conv.input_size() : static_cast<int>(weight.cols());
}

int Layer::output_size() const {
    return kind == LayerKind::Conv ? conv.output_size() : static_cast<int>(weight.rows());
}

std::size_t PolicyParams::conv_count() const {
    std::size_t n = 0;
    while (n < layers.size() && layers[n].kind == LayerKind::Conv) ++n;
    return n;
}

std::size_t PolicyParams::parameter_count() const {
    std::size_t n = 0;
    for (const Layer& l : layers) n += static_cast<std::size_t>(l.weight.size() + l.bias.size());
    return n;
}

namespace {

void glorot_fill(Matrix& w, int fan_in, int fan_out, double scale, Rng& rng) {
    const double limit = scale * std::sqrt(6.0 / (fan_in + fan_out));
    for (Eigen::Index i = 0; i < w.size(); ++i) w.data()[i] = rng.uniform(-limit, limit);
}

void activate(Matrix& z, Activation a) {
    switch (a) {
        case Activation::Identity: break;
        case Activation::Tanh: z = z.array().tanh(); break;
        case Activation::Relu: z = z.array().max(0.0); break;
    }
}

// Multiplies d in place by the activation derivative expressed through the output y.
void activation_backward(Matrix& d, const Matrix& y, Activation a) {
    switch (a) {
        case Activation::Identity: break;
        case Activation::Tanh: d.array() *= 1.0 - y.array().square(); break;
        case Activation::Relu: d.array() *= (y.array() > 0.0).cast<double>(); break;
    }
}

Matrix im2col(const Matrix& x, const ConvGeometry& g) {
    const Eigen::Index n = x.rows();
    const int os = g.out_side();
    const int positions = os * os;
    Matrix patches(n * positions, g.patch_size());
    for (Eigen::Index s = 0; s < n; ++s) {
        const double* img = x.row(s).data();
        for (int oy = 0; oy < os; ++oy) {
            for (int ox = 0; ox < os; ++ox) {
                double* dst = patches.row(s * positions + oy * os + ox).data();
                for (int ky = 0; ky < g.kernel; ++ky) {
                    const double* src = img + ((oy + ky) * g.in_side + ox) * g.in_channels;
                    std::memcpy(dst, src, sizeof(double) * static_cast<std::size_t>(g.kernel * g.in_channels));
                    dst += g.kernel * g.in_channels;
                }
            }
        }
    }
    return patches;
}

Matrix col2im(const Matrix& d_patches, Eigen::Index n, const ConvGeometry& g) {
    const int os = g.out_side();
    const int positions = os * os;
    Matrix dx = Matrix::Zero(n, g.input_size());
    for (Eigen::Index s = 0; s < n; ++s) {
        double* img = dx.row(s).data();
        for (int oy = 0; oy < os; ++oy) {
            for (int ox = 0; ox < os; ++ox) {
                const double* src = d_patches.row(s * positions + oy * os + ox).data();
                for (int ky = 0; ky < g.kernel; ++ky) {
                    double* dst = img + ((oy + ky) * g.in_side + ox) * g.in_channels;
                    for (int j = 0; j < g.kernel * g.in_channels; ++j) dst[j] += src[j];
                    src += g.kernel * g.in_channels;
                }
            }
        }
    }
    return dx;
}

void require_same_shapes(const PolicyParams& net, const std::vector<Matrix>& w, const std::vector<Vector>& b,
                         const char* what) {
    if (w.size() != net.layers.size() || b.size() != net.layers.size()) {
        throw std::invalid_argument(std::string(what) + ": layer count mismatch");
    }
    for (std::size_t i = 0; i < net.layers.size(); ++i) {
        if (w[i].rows() != net.layers[i].weight.rows() || w[i].cols() != net.layers[i].weight.cols() ||
            b[i].size() != net.layers[i].bias.size()) {
            throw std::invalid_argument(std::string(what) + ": shape mismatch in layer " + std::to_string(i));
        }
    }
}

}  // namespace

PolicyParams make_policy(const NetArchitecture& arch, double entropy_coef, Rng& rng) {
    if (arch.action_count < 1) throw std::invalid_argument("make_policy: action_count must be positive");
    if (arch.obs_length < 1) throw std::invalid_argument("make_policy: obs_length must be positive");
    PolicyParams net;
    net.arch = arch;
    net.entropy_coef = entropy_coef;

    int features = arch.obs_length;
    if (!arch.conv_channels.empty()) {
        if (arch.grid_side <= 0 ||
            arch.prefix_length + arch.grid_side * arch.grid_side * arch.grid_channels != arch.obs_length) {
            throw std::invalid_argument("make_policy: grid geometry does not match obs_length");
        }
        int side = arch.grid_side;
        int channels = arch.grid_channels;
        for (int out_channels : arch.conv_channels) {
            Layer layer;
            layer.kind = LayerKind::Conv;
            layer.activation = arch.conv_activation;
            layer.conv = {side, channels, arch.kernel, out_channels};
            if (layer.conv.out_side() < 1) throw std::invalid_argument("make_policy: kernel larger than grid");
            layer.weight.resize(out_channels, layer.conv.patch_size());
            glorot_fill(layer.weight, layer.conv.patch_size(), out_channels * arch.kernel * arch.kernel, 1.0, rng);
            layer.bias = Vector::Zero(out_channels);
            side = layer.conv.out_side();
            channels = out_channels;
            net.layers.push_back(std::move(layer));
        }
        features = arch.prefix_length + side * side * channels;
    }

    std::vector<int> widths = arch.hidden;
    widths.push_back(arch.head_size());
    for (std::size_t i = 0; i < widths.size(); ++i) {
        const bool is_head = i + 1 == widths.size();
        Layer layer;
        layer.kind = LayerKind::Dense;
        layer.activation = is_head ? Activation::Identity : arch.hidden_activation;
        layer.weight.resize(widths[i], features);
        glorot_fill(layer.weight, features, widths[i], 1.0, rng);
        if (is_head) layer.weight.topRows(arch.action_count) *= 0.01;
        layer.bias = Vector::Zero(widths[i]);
        features = widths[i];
        net.layers.push_back(std::move(layer));
    }
    return net;
}

Gradients Gradients::zeros_like(const PolicyParams& net) {
    Gradients g;
    for (const Layer& l : net.layers) {
        g.weight.push_back(Matrix::Zero(l.weight.rows(), l.weight.cols()));
        g.bias.push_back(Vector::Zero(l.bias.size()));
    }
    return g;
}

Gradients& Gradients::operator+=(const Gradients& other) {
    if (other.weight.size() != weight.size()) throw std::invalid_argument("Gradients: shape mismatch");
    for (std::size_t i = 0; i < weight.size(); ++i) {
        weight[i] += other.weight[i];
        bias[i] += other.bias[i];
    }
    return *this;
}

Gradients& Gradients::operator*=(double s) {
    for (auto& w : weight) w *= s;
    for (auto& b : bias) b *= s;
    return *this;
}

double Gradients::squared_norm() const {
    double total = 0.0;
    for (const auto& w : weight) total += w.squaredNorm();
    for (const auto& b : bias) total += b.squaredNorm();
    return total;
}

bool Gradients::all_finite() const {
    for (const auto& w : weight)
        if (!w.allFinite()) return false;
    for (const auto& b : bias)
        if (!b.allFinite()) return false;
    return true;
}

AdamState AdamState::for_params(const PolicyParams& net, double learning_rate) {
    AdamState s;
    s.learning_rate = learning_rate;
    for (const Layer& l : net.layers) {
        s.m_weight.push_back(Matrix::Zero(l.weight.rows(), l.weight.cols()));
        s.v_weight.push_back(Matrix::Zero(l.weight.rows(), l.weight.cols()));
        s.m_bias.push_back(Vector::Zero(l.bias.size()));
        s.v_bias.push_back(Vector::Zero(l.bias.size()));
    }
    return s;
}

Eigen::Ref<const Matrix> ForwardPass::logits() const {
    return head.leftCols(action_count);
}

Vector ForwardPass::values() const {
    if (head.cols() <= action_count) throw std::logic_error("ForwardPass::values: network has no critic");
    return head.col(action_count);
}

ForwardPass forward_batch(const PolicyParams& net, const Matrix& observations) {
    if (observations.cols() != net.arch.obs_length) {
        throw std::invalid_argument("forward: observation length " + std::to_string(observations.cols()) +
                                    " does not match network input " + std::to_string(net.arch.obs_length));
    }
    const Eigen::Index n = observations.rows();
    const std::size_t convs = net.conv_count();
    ForwardPass pass;
    pass.inputs.reserve(net.layers.size());
    pass.outputs.reserve(net.layers.size());

    Matrix current;
    if (convs > 0) {
        current = observations.rightCols(observations.cols() - net.arch.prefix_length);
    } else {
        current = observations;
    }
    for (std::size_t i = 0; i < net.layers.size(); ++i) {
        const Layer& layer = net.layers[i];
        if (i == convs && convs > 0 && net.arch.prefix_length > 0) {
            Matrix joined(n, net.arch.prefix_length + current.cols());
            joined << observations.leftCols(net.arch.prefix_length), current;
            current = std::move(joined);
        }
        if (layer.kind == LayerKind::Conv) {
            Matrix patches = im2col(current, layer.conv);
            Matrix z = patches * layer.weight.transpose();
            z.rowwise() += layer.bias.transpose();
            activate(z, layer.activation);
            current = Eigen::Map<const Matrix>(z.data(), n, layer.conv.output_size());
            pass.inputs.push_back(std::move(patches));
        } else {
            Matrix z = current * layer.weight.transpose();
            z.rowwise() += layer.bias.transpose();
            activate(z, layer.activation);
            pass.inputs.push_back(std::move(current));
            current = std::move(z);
        }
        pass.outputs.push_back(current);
    }
    pass.head = std::move(current);
    pass.action_count = net.action_count();
    return pass;
}

PolicyOutput forward(const PolicyParams& net, const Observation& obs) {
    Matrix row = Eigen::Map<const Matrix>(obs.data(), 1, static_cast<Eigen::Index>(obs.size()));
    const ForwardPass pass = forward_batch(net, row);
    PolicyOutput out;
    out.logits = pass.head.row(0).head(net.action_count()).transpose();
    if (net.has_critic()) out.value = pass.head(0, net.action_count());
    return out;
}

Matrix stack_observations(std::span<const Observation> observations) {
    if (observations.empty()) return Matrix(0, 0);
    const auto width = static_cast<Eigen::Index>(observations.front().size());
    Matrix m(static_cast<Eigen::Index>(observations.size()), width);
    for (std::size_t i = 0; i < observations.size(); ++i) {
        if (static_cast<Eigen::Index>(observations[i].size()) != width) {
            throw std::invalid_argument("stack_observations: ragged observations");
        }
        m.row(static_cast<Eigen::Index>(i)) = Eigen::Map<const Eigen::RowVectorXd>(observations[i].data(), width);
    }
    return m;
}

Vector action_distribution(const Eigen::Ref<const Vector>& logits) {
    const double peak = logits.maxCoeff();
    Vector p = (logits.array() - peak).exp();
    p /= p.sum();
    return p;
}

SampledAction sample_action(const Vector& dist, Rng& rng) {
    const double u = rng.uniform();
    double cumulative = 0.0;
    int last_positive = 0;
    for (Eigen::Index a = 0; a < dist.size(); ++a) {
        if (dist[a] <= 0.0) continue;
        last_positive = static_cast<int>(a);
        cumulative += dist[a];
        if (u < cumulative) return {static_cast<int>(a), dist[a]};
    }
    // Rounding left the cumulative sum just under u.
    return {last_positive, dist[last_positive]};
}

double entropy(const Vector& dist) {
    double h = 0.0;
    for (Eigen::Index a = 0; a < dist.size(); ++a) {
        if (dist[a] > 0.0) h -= dist[a] * std::log(dist[a]);
    }
    return h;
}

Gradients backprop(const PolicyParams& net, const ForwardPass& pass, const Matrix& d_head) {
    if (pass.outputs.size() != net.layers.size()) throw std::invalid_argument("backprop: stale forward pass");
    if (d_head.rows() != pass.head.rows() || d_head.cols() != pass.head.cols()) {
        throw std::invalid_argument("backprop: d_head shape mismatch");
    }
    if (!d_head.allFinite()) throw std::domain_error("backprop: non-finite loss gradient");

    const Eigen::Index n = d_head.rows();
    const std::size_t convs = net.conv_count();
    Gradients grads = Gradients::zeros_like(net);
    Matrix d = d_head;
    for (std::size_t k = net.layers.size(); k-- > 0;) {
        const Layer& layer = net.layers[k];
        activation_backward(d, pass.outputs[k], layer.activation);
        if (layer.kind == LayerKind::Dense) {
            grads.weight[k].noalias() = d.transpose() * pass.inputs[k];
            grads.bias[k] = d.colwise().sum().transpose();
            if (k == 0) break;
            Matrix d_in = d * layer.weight;
            if (k == convs && net.arch.prefix_length > 0) {
                d = d_in.rightCols(d_in.cols() - net.arch.prefix_length);
            } else {
                d = std::move(d_in);
            }
        } else {
            const Eigen::Index positions = layer.conv.out_side() * layer.conv.out_side();
            Eigen::Map<const Matrix> dz(d.data(), n * positions, layer.conv.out_channels);
            grads.weight[k].noalias() = dz.transpose() * pass.inputs[k];
            grads.bias[k] = dz.colwise().sum().transpose();
            if (k == 0) break;
            Matrix d_patches = dz * layer.weight;
            d = col2im(d_patches, n, layer.conv);
        }
    }
    if (!grads.all_finite()) throw std::domain_error("backprop: non-finite gradient");
    return grads;
}

void adam_step(PolicyParams& net, const Gradients& grads, AdamState& state) {
    require_same_shapes(net, grads.weight, grads.bias, "adam_step (gradients)");
    require_same_shapes(net, state.m_weight, state.m_bias, "adam_step (state)");
    ++state.step;
    const double b1 = state.beta1;
    const double b2 = state.beta2;
    const double c1 = 1.0 - std::pow(b1, static_cast<double>(state.step));
    const double c2 = 1.0 - std::pow(b2, static_cast<double>(state.step));
    auto update = [&](auto& param, const auto& g, auto& m, auto& v) {
        m = b1 * m + (1.0 - b1) * g;
        v = b2 * v + (1.0 - b2) * g.cwiseProduct(g);
        param.array() -= state.learning_rate * (m.array() / c1) / ((v.array() / c2).sqrt() + state.epsilon);
    };
    for (std::size_t i = 0; i < net.layers.size(); ++i) {
        update(net.layers[i].weight, grads.weight[i], state.m_weight[i], state.v_weight[i]);
        update(net.layers[i].bias, grads.bias[i], state.m_bias[i], state.v_bias[i]);
    }
}

PolicyParams clone_params(const PolicyParams& src, bool actor_only, std::optional<double> entropy_coef) {
    PolicyParams copy = src;
    if (actor_only && copy.has_critic()) {
        Layer& head = copy.layers.back();
        const Eigen::Index actions = copy.arch.action_count;
        Matrix w = head.weight.topRows(actions);
        Vector b = head.bias.head(actions);
        head.weight = std::move(w);
        head.bias = std::move(b);
        copy.arch.has_critic = false;
    }
    if (entropy_coef) copy.entropy_coef = *entropy_coef;
    return copy;
}

std::vector<double> flatten(const PolicyParams& net) {
    std::vector<double> out;
    out.reserve(net.parameter_count());
    for (const Layer& l : net.layers) {
        out.insert(out.end(), l.weight.data(), l.weight.data() + l.weight.size());
        out.insert(out.end(), l.bias.data(), l.bias.data() + l.bias.size());
    }
    return out;
}

void assign_flat(PolicyParams& net, std::span<const double> values) {
    if (values.size() != net.parameter_count()) throw std::invalid_argument("assign_flat: size mismatch");
    std::size_t at = 0;
    for (Layer& l : net.layers) {
        std::memcpy(l.weight.data(), values.data() + at, sizeof(double) * static_cast<std::size_t>(l.weight.size()));
        at += static_cast<std::size_t>(l.weight.size());
        std::memcpy(l.bias.data(), values.data() + at, sizeof(double) * static_cast<std::size_t>(l.bias.size()));
        at += static_cast<std::size_t>(l.bias.size());
    }
}

std::vector<double> flatten(const Gradients& grads) {
    std::vector<double> out;
    for (std::size_t i = 0; i < grads.weight.size(); ++i) {
        out.insert(out.end(), grads.weight[i].data(), grads.weight[i].data() + grads.weight[i].size());
        out.insert(out.end(), grads.bias[i].data(), grads.bias[i].data() + grads.bias[i].size());
    }
    return out;
}

bool params_equal(const PolicyParams& a, const PolicyParams& b) {
    if (!(a.arch == b.arch) || a.entropy_coef != b.entropy_coef || a.layers.size() != b.layers.size()) return false;
    return flatten(a) == flatten(b);
}

// ---------------------------------------------------------------------------
// Checkpoints

namespace {

json architecture_to_json(const NetArchitecture& a) {
    return {{"obs_length", a.obs_length},
            {"prefix_length", a.prefix_length},
            {"grid_side", a.grid_side},
            {"grid_channels", a.grid_channels},
            {"conv_channels", a.conv_channels},
            {"kernel", a.kernel},
            {"conv_activation", to_string(a.conv_activation)},
            {"hidden", a.hidden},
            {"hidden_activation", to_string(a.hidden_activation)},
            {"action_count", a.action_count},
            {"has_critic", a.has_critic}};
}

NetArchitecture architecture_from_json(const json& j) {
    NetArchitecture a;
    a.obs_length = j.at("obs_length").get<int>();
    a.prefix_length = j.at("prefix_length").get<int>();
    a.grid_side = j.at("grid_side").get<int>();
    a.grid_channels = j.at("grid_channels").get<int>();
    a.conv_channels = j.at("conv_channels").get<std::vector<int>>();
    a.kernel = j.at("kernel").get<int>();
    a.conv_activation = activation_from_string(j.at("conv_activation").get<std::string>());
    a.hidden = j.at("hidden").get<std::vector<int>>();
    a.hidden_activation = activation_from_string(j.at("hidden_activation").get<std::string>());
    a.action_count = j.at("action_count").get<int>();
    a.has_critic = j.at("has_critic").get<bool>();
    return a;
}

void put_f32_le(std::ostream& out, float f) {
    std::uint32_t bits = std::bit_cast<std::uint32_t>(f);
    char bytes[4];
    for (int i = 0; i < 4; ++i) bytes[i] = static_cast<char>((bits >> (8 * i)) & 0xFFu);
    out.write(bytes, 4);
}

float get_f32_le(std::istream& in) {
    unsigned char bytes[4];
    if (!in.read(reinterpret_cast<char*>(bytes), 4)) throw std::runtime_error("checkpoint: truncated parameter stream");
    std::uint32_t bits = 0;
    for (int i = 0; i < 4; ++i) bits |= static_cast<std::uint32_t>(bytes[i]) << (8 * i);
    return std::bit_cast<float>(bits);
}

}  // namespace

void save_checkpoint(const PolicyParams& net, std::ostream& out) {
    json header;
    header["format"] = "r3lab-policy";
    header["version"] = 1;
    header["architecture"] = architecture_to_json(net.arch);
    header["entropy_coef"] = net.entropy_coef;
    json shapes = json::array();
    for (const Layer& l : net.layers) {
        shapes.push_back({{"kind", l.kind == LayerKind::Conv ? "conv" : "dense"},
                          {"activation", to_string(l.activation)},
                          {"weight", {l.weight.rows(), l.weight.cols()}},
                          {"bias", l.bias.size()}});
    }
    header["layers"] = shapes;
    header["count"] = net.parameter_count();
    out << header.dump() << '\n';
    for (double v : flatten(net)) put_f32_le(out, static_cast<float>(v));
    if (!out) throw std::runtime_error("checkpoint: write failed");
}

PolicyParams load_checkpoint(std::istream& in) {
    std::string line;
    if (!std::getline(in, line)) throw std::runtime_error("checkpoint: missing header");
    const json header = json::parse(line);
    if (header.at("format") != "r3lab-policy") throw std::runtime_error("checkpoint: unknown format");
    Rng scratch(0);
    PolicyParams net = make_policy(architecture_from_json(header.at("architecture")),
                                   header.at("entropy_coef").get<double>(), scratch);
    const auto count = header.at("count").get<std::size_t>();
    if (count != net.parameter_count()) throw std::runtime_error("checkpoint: parameter count mismatch");
    std::vector<double> values(count);
    for (double& v : values) v = static_cast<double>(get_f32_le(in));
    assign_flat(net, values);
    return net;
}

}  // namespace r3
