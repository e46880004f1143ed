#include "splitkit/maxout_mult.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <map>

#include <nlohmann/json.hpp>

#include "splitkit/error.hpp"

namespace splitkit {

using json = nlohmann::ordered_json;

void MultNet::validate() const {
    const std::int64_t n = static_cast<std::int64_t>(neurons.size());
    if (output < 0 || output >= n) throw ShapeError("multnet: output neuron id out of range");
    std::vector<bool> is_input(neurons.size(), false);
    for (std::int64_t id : inputs) {
        if (id < 0 || id >= n || neurons[static_cast<std::size_t>(id)].kind != MultNeuronKind::Input) {
            throw ShapeError("multnet: inputs list entry " + std::to_string(id) +
                             " is not an input neuron");
        }
        if (is_input[static_cast<std::size_t>(id)]) {
            throw ShapeError("multnet: duplicate input id " + std::to_string(id));
        }
        is_input[static_cast<std::size_t>(id)] = true;
    }
    for (std::int64_t v = 0; v < n; ++v) {
        const MultNeuron& nu = neurons[static_cast<std::size_t>(v)];
        const std::string where = "multnet neuron " + std::to_string(v);
        switch (nu.kind) {
            case MultNeuronKind::Input:
                if (!nu.add_in.empty() || !nu.mul_in.empty()) {
                    throw ShapeError(where + ": input neurons take no arcs");
                }
                if (!is_input[static_cast<std::size_t>(v)]) {
                    throw ShapeError(where + ": input neuron missing from inputs list");
                }
                break;
            case MultNeuronKind::Addition:
                if (nu.rank < 1) throw ShapeError(where + ": rank must be >= 1");
                if (!nu.mul_in.empty()) throw ShapeError(where + ": addition neuron with product arcs");
                for (const AdditionArc& a : nu.add_in) {
                    if (a.from < 0 || a.from >= v) {
                        throw ShapeError(where + ": arc from " + std::to_string(a.from) +
                                         " breaks the topological order (cycle or forward arc)");
                    }
                    if (static_cast<std::int64_t>(a.weights.size()) != nu.rank) {
                        throw ShapeError(where + ": arc weight vector does not match rank");
                    }
                }
                break;
            case MultNeuronKind::Multiplication:
                if (!nu.add_in.empty()) throw ShapeError(where + ": multiplication neuron with addition arcs");
                if (nu.mul_in.empty()) throw ShapeError(where + ": multiplication neuron needs inputs");
                for (const MultiplicationArc& a : nu.mul_in) {
                    if (a.from_pos < 0 || a.from_pos >= v || (a.from_neg >= 0 && a.from_neg >= v)) {
                        throw ShapeError(where + ": arc breaks the topological order (cycle or forward arc)");
                    }
                    if (a.exponent < 1) {
                        throw ShapeError(where + ": multiplication exponents are natural numbers >= 1");
                    }
                }
                break;
        }
    }
}

std::vector<double> eval_multnet_all(const MultNet& g, const std::vector<double>& x) {
    g.validate();
    if (x.size() != g.inputs.size()) {
        throw ShapeError("eval_multnet: assignment covers " + std::to_string(x.size()) +
                         " inputs, network has " + std::to_string(g.inputs.size()));
    }
    std::vector<double> val(g.neurons.size(), 0.0);
    for (std::size_t k = 0; k < g.inputs.size(); ++k) {
        val[static_cast<std::size_t>(g.inputs[k])] = x[k];
    }
    for (std::size_t v = 0; v < g.neurons.size(); ++v) {
        const MultNeuron& nu = g.neurons[v];
        if (nu.kind == MultNeuronKind::Addition) {
            double best = 0.0;
            for (std::int64_t i = 0; i < nu.rank; ++i) {
                double z = 0.0;
                for (const AdditionArc& a : nu.add_in) {
                    z += a.weights[static_cast<std::size_t>(i)] * val[static_cast<std::size_t>(a.from)];
                }
                if (i == 0 || z > best) best = z;
            }
            val[v] = best;
        } else if (nu.kind == MultNeuronKind::Multiplication) {
            double prod = 1.0;
            for (const MultiplicationArc& a : nu.mul_in) {
                double base = val[static_cast<std::size_t>(a.from_pos)];
                if (a.from_neg >= 0) base -= val[static_cast<std::size_t>(a.from_neg)];
                for (std::int64_t e = 0; e < a.exponent; ++e) prod *= base;
            }
            val[v] = prod;
        }
    }
    return val;
}

double eval_multnet(const MultNet& g, const std::vector<double>& x) {
    return eval_multnet_all(g, x)[static_cast<std::size_t>(g.output)];
}

namespace {

double binom(std::int64_t n, std::int64_t k) {
    double r = 1.0;
    for (std::int64_t i = 1; i <= k; ++i) {
        r = r * static_cast<double>(n - k + i) / static_cast<double>(i);
    }
    return std::round(r);
}

}  // namespace

MultSplit split_multnet(const MultNet& g, const MultSplitOptions& opt) {
    g.validate();
    MultNet out;
    // pos_of/neg_of map original ids into the split graph.
    std::vector<std::int64_t> pos_of(g.neurons.size(), -1), neg_of(g.neurons.size(), -1);
    std::int64_t zero_neuron = -1;

    auto push = [&out](MultNeuron nu) {
        out.neurons.push_back(std::move(nu));
        return static_cast<std::int64_t>(out.neurons.size()) - 1;
    };
    auto get_zero = [&]() {
        if (zero_neuron < 0) {
            MultNeuron z;
            z.kind = MultNeuronKind::Addition;
            z.rank = 1;
            zero_neuron = push(std::move(z));
        }
        return zero_neuron;
    };

    for (std::size_t v = 0; v < g.neurons.size(); ++v) {
        const MultNeuron& nu = g.neurons[v];
        switch (nu.kind) {
            case MultNeuronKind::Input: {
                MultNeuron in;
                in.kind = MultNeuronKind::Input;
                const std::int64_t iv = push(std::move(in));
                out.inputs.push_back(iv);
                if (!opt.split_inputs) {
                    pos_of[v] = iv;
                    neg_of[v] = get_zero();
                    break;
                }
                MultNeuron proj_p;
                proj_p.kind = MultNeuronKind::Addition;
                proj_p.rank = 2;
                proj_p.add_in.push_back({iv, {1.0, 0.0}});
                MultNeuron proj_n;
                proj_n.kind = MultNeuronKind::Addition;
                proj_n.rank = 2;
                proj_n.add_in.push_back({iv, {-1.0, 0.0}});
                pos_of[v] = push(std::move(proj_p));
                neg_of[v] = push(std::move(proj_n));
                break;
            }
            case MultNeuronKind::Addition: {
                MultNeuron vp;
                vp.kind = MultNeuronKind::Addition;
                vp.rank = nu.rank;
                MultNeuron vn;
                vn.kind = MultNeuronKind::Addition;
                vn.rank = 1;
                for (const AdditionArc& arc : nu.add_in) {
                    std::vector<double> a(arc.weights.size()), b(arc.weights.size());
                    double sum_a = 0.0, sum_b = 0.0;
                    for (std::size_t i = 0; i < arc.weights.size(); ++i) {
                        a[i] = std::max(arc.weights[i], 0.0);
                        b[i] = std::max(-arc.weights[i], 0.0);
                        sum_a += a[i];
                        sum_b += b[i];
                    }
                    std::vector<double> wp(arc.weights.size()), wn(arc.weights.size());
                    for (std::size_t i = 0; i < arc.weights.size(); ++i) {
                        wp[i] = a[i] + (sum_b - b[i]);   // from u+
                        wn[i] = b[i] + (sum_a - a[i]);   // from u-, sign-flipped arc
                    }
                    vp.add_in.push_back({pos_of[arc.from], std::move(wp)});
                    vp.add_in.push_back({neg_of[arc.from], std::move(wn)});
                    vn.add_in.push_back({pos_of[arc.from], {sum_b}});
                    vn.add_in.push_back({neg_of[arc.from], {sum_a}});
                }
                pos_of[v] = push(std::move(vp));
                neg_of[v] = push(std::move(vn));
                break;
            }
            case MultNeuronKind::Multiplication: {
                if (static_cast<std::int64_t>(nu.mul_in.size()) > opt.max_fan_in) {
                    throw CapacityError("split_multnet: neuron " + std::to_string(v) + " fan-in " +
                                        std::to_string(nu.mul_in.size()) + " exceeds bound " +
                                        std::to_string(opt.max_fan_in));
                }
                for (const MultiplicationArc& arc : nu.mul_in) {
                    if (arc.exponent > opt.max_exponent) {
                        throw CapacityError("split_multnet: neuron " + std::to_string(v) +
                                            " exponent " + std::to_string(arc.exponent) +
                                            " exceeds bound " + std::to_string(opt.max_exponent));
                    }
                }
                MultNeuron vp;
                vp.kind = MultNeuronKind::Addition;
                vp.rank = 1;
                MultNeuron vn;
                vn.kind = MultNeuronKind::Addition;
                vn.rank = 1;
                // Signed multinomial expansion of prod_u (u+ - u-)^e_u; q
                // counts the u- powers per factor.
                const std::size_t f = nu.mul_in.size();
                std::vector<std::pair<std::int64_t, std::int64_t>> half_pair(f, {-1, -1});
                for (std::size_t u = 0; u < f; ++u) {
                    const MultiplicationArc& arc = nu.mul_in[u];
                    if (arc.from_neg < 0) continue;
                    MultNeuron hp;
                    hp.kind = MultNeuronKind::Addition;
                    hp.rank = 1;
                    hp.add_in.push_back({pos_of[arc.from_pos], {1.0}});
                    hp.add_in.push_back({neg_of[arc.from_neg], {1.0}});
                    MultNeuron hn;
                    hn.kind = MultNeuronKind::Addition;
                    hn.rank = 1;
                    hn.add_in.push_back({neg_of[arc.from_pos], {1.0}});
                    hn.add_in.push_back({pos_of[arc.from_neg], {1.0}});
                    half_pair[u] = {push(std::move(hp)), push(std::move(hn))};
                }
                std::vector<std::int64_t> q(f, 0);
                while (true) {
                    double coeff = 1.0;
                    std::int64_t qsum = 0;
                    bool vanishes = false;
                    MultNeuron term;
                    term.kind = MultNeuronKind::Multiplication;
                    for (std::size_t u = 0; u < f; ++u) {
                        const MultiplicationArc& arc = nu.mul_in[u];
                        const std::int64_t e = arc.exponent;
                        coeff *= binom(e, q[u]);
                        qsum += q[u];
                        const std::int64_t p_exp = e - q[u];
                        // Pair halves: labels present in the source combine
                        // the halves of both members, since
                        // (p - n) = (p+ + n-) - (p- + n+).
                        std::int64_t up, un;
                        if (arc.from_neg >= 0) {
                            up = half_pair[u].first;
                            un = half_pair[u].second;
                        } else {
                            up = pos_of[arc.from_pos];
                            un = neg_of[arc.from_pos];
                        }
                        if (p_exp >= 1) {
                            if (up == zero_neuron) vanishes = true;
                            term.mul_in.push_back({up, -1, p_exp});
                        }
                        if (q[u] >= 1) {
                            if (un == zero_neuron) vanishes = true;
                            term.mul_in.push_back({un, -1, q[u]});
                        }
                    }
                    if (!vanishes) {
                        const std::int64_t tid = push(std::move(term));
                        if (qsum % 2 == 0) {
                            vp.add_in.push_back({tid, {coeff}});
                        } else {
                            vn.add_in.push_back({tid, {coeff}});
                        }
                    }
                    // odometer over 0 <= q[u] <= e_u
                    std::size_t u = 0;
                    for (; u < f; ++u) {
                        if (q[u] < nu.mul_in[u].exponent) {
                            ++q[u];
                            break;
                        }
                        q[u] = 0;
                    }
                    if (u == f) break;
                }
                pos_of[v] = push(std::move(vp));
                neg_of[v] = push(std::move(vn));
                break;
            }
        }
    }

    MultSplit split{out, out};
    split.pos.output = pos_of[static_cast<std::size_t>(g.output)];
    split.neg.output = neg_of[static_cast<std::size_t>(g.output)];
    split.pos.validate();
    split.neg.validate();
    return split;
}

const char* multnet_class_name(MultNetClass c) {
    switch (c) {
        case MultNetClass::General: return "general";
        case MultNetClass::InputConvex: return "input_convex";
        case MultNetClass::Monotone: return "monotone";
    }
    return "?";
}

MultNetClass classify_multnet(const MultNet& g) {
    g.validate();
    bool input_incident_negative = false;
    for (const MultNeuron& nu : g.neurons) {
        for (const AdditionArc& a : nu.add_in) {
            bool has_neg = false;
            for (double w : a.weights) has_neg |= w < 0.0;
            if (!has_neg) continue;
            if (g.neurons[static_cast<std::size_t>(a.from)].kind == MultNeuronKind::Input) {
                input_incident_negative = true;
            } else {
                return MultNetClass::General;
            }
        }
    }
    return input_incident_negative ? MultNetClass::InputConvex : MultNetClass::Monotone;
}

namespace {

using TermMap = std::map<std::vector<std::int64_t>, double>;

struct Rep {
    std::vector<TermMap> branches;
};

std::int64_t degree_of(const std::vector<std::int64_t>& expo) {
    std::int64_t d = 0;
    for (auto e : expo) d += e;
    return d;
}

void check_caps(const TermMap& t, const ExtractCaps& caps) {
    if (static_cast<std::int64_t>(t.size()) > caps.max_terms) {
        throw CapacityError("posynomial_max_extract: term cap exceeded");
    }
    for (const auto& [expo, c] : t) {
        if (degree_of(expo) > caps.max_degree) {
            throw CapacityError("posynomial_max_extract: degree cap exceeded");
        }
    }
}

TermMap poly_scale_add(const TermMap& acc, const TermMap& p, double w) {
    TermMap out = acc;
    if (w == 0.0) return out;
    for (const auto& [expo, c] : p) {
        const double nv = out[expo] + w * c;
        if (nv == 0.0) {
            out.erase(expo);
        } else {
            out[expo] = nv;
        }
    }
    return out;
}

TermMap poly_mul(const TermMap& a, const TermMap& b, const ExtractCaps& caps) {
    TermMap out;
    for (const auto& [ea, ca] : a) {
        for (const auto& [eb, cb] : b) {
            std::vector<std::int64_t> e(ea.size());
            for (std::size_t i = 0; i < e.size(); ++i) e[i] = ea[i] + eb[i];
            out[e] += ca * cb;
        }
    }
    for (auto it = out.begin(); it != out.end();) {
        it = it->second == 0.0 ? out.erase(it) : std::next(it);
    }
    check_caps(out, caps);
    return out;
}

}  // namespace

PosynomialMax posynomial_max_extract(const MultNet& g, const ExtractCaps& caps) {
    g.validate();
    const std::size_t d = g.inputs.size();
    std::vector<std::size_t> input_slot(g.neurons.size(), 0);
    for (std::size_t k = 0; k < g.inputs.size(); ++k) {
        input_slot[static_cast<std::size_t>(g.inputs[k])] = k;
    }

    std::vector<Rep> reps(g.neurons.size());
    for (std::size_t v = 0; v < g.neurons.size(); ++v) {
        const MultNeuron& nu = g.neurons[v];
        Rep rep;
        switch (nu.kind) {
            case MultNeuronKind::Input: {
                std::vector<std::int64_t> e(d, 0);
                e[input_slot[v]] = 1;
                TermMap t;
                t[e] = 1.0;
                rep.branches.push_back(std::move(t));
                break;
            }
            case MultNeuronKind::Addition: {
                for (std::int64_t i = 0; i < nu.rank; ++i) {
                    // Sum over arcs distributes over the per-arc maxima:
                    // cross product of branch choices.
                    std::vector<TermMap> acc{TermMap{}};
                    for (const AdditionArc& a : nu.add_in) {
                        const double w = a.weights[static_cast<std::size_t>(i)];
                        if (w == 0.0) continue;
                        const Rep& src = reps[static_cast<std::size_t>(a.from)];
                        std::vector<TermMap> next;
                        for (const TermMap& base : acc) {
                            for (const TermMap& choice : src.branches) {
                                next.push_back(poly_scale_add(base, choice, w));
                                if (static_cast<std::int64_t>(next.size()) > caps.max_branches) {
                                    throw CapacityError(
                                        "posynomial_max_extract: branch cap exceeded");
                                }
                            }
                        }
                        acc = std::move(next);
                    }
                    for (TermMap& t : acc) {
                        check_caps(t, caps);
                        rep.branches.push_back(std::move(t));
                    }
                    if (static_cast<std::int64_t>(rep.branches.size()) > caps.max_branches) {
                        throw CapacityError("posynomial_max_extract: branch cap exceeded");
                    }
                }
                break;
            }
            case MultNeuronKind::Multiplication: {
                std::vector<TermMap> acc{TermMap{{std::vector<std::int64_t>(d, 0), 1.0}}};
                for (const MultiplicationArc& a : nu.mul_in) {
                    if (a.from_neg >= 0) {
                        throw ConversionError(
                            "posynomial_max_extract: labeled pair arcs are not supported");
                    }
                    const Rep& src = reps[static_cast<std::size_t>(a.from_pos)];
                    std::vector<TermMap> next;
                    for (const TermMap& base : acc) {
                        for (const TermMap& choice : src.branches) {
                            TermMap powed = choice;
                            for (std::int64_t e = 1; e < a.exponent; ++e) {
                                powed = poly_mul(powed, choice, caps);
                            }
                            next.push_back(poly_mul(base, powed, caps));
                            if (static_cast<std::int64_t>(next.size()) > caps.max_branches) {
                                throw CapacityError("posynomial_max_extract: branch cap exceeded");
                            }
                        }
                    }
                    acc = std::move(next);
                }
                rep.branches = std::move(acc);
                break;
            }
        }
        reps[v] = std::move(rep);
    }

    PosynomialMax out;
    for (TermMap& t : reps[static_cast<std::size_t>(g.output)].branches) {
        Polynomial p;
        for (auto& [expo, c] : t) p.terms.emplace_back(expo, c);
        out.branches.push_back(std::move(p));
    }
    return out;
}

double eval_posynomial_max(const PosynomialMax& rep, const std::vector<double>& x) {
    if (rep.branches.empty()) throw ShapeError("eval_posynomial_max: empty representation");
    double best = 0.0;
    bool first = true;
    for (const Polynomial& p : rep.branches) {
        double v = 0.0;
        for (const auto& [expo, c] : p.terms) {
            double term = c;
            for (std::size_t i = 0; i < expo.size(); ++i) {
                for (std::int64_t e = 0; e < expo[i]; ++e) term *= x[i];
            }
            v += term;
        }
        if (first || v > best) best = v;
        first = false;
    }
    return best;
}

std::string multnet_to_json_text(const MultNet& g) {
    g.validate();
    json j;
    j["format"] = "splitkit-multnet";
    j["version"] = 1;
    j["inputs"] = g.inputs;
    j["output"] = g.output;
    json neurons = json::array();
    for (std::size_t v = 0; v < g.neurons.size(); ++v) {
        const MultNeuron& nu = g.neurons[v];
        json nj;
        nj["id"] = v;
        switch (nu.kind) {
            case MultNeuronKind::Input:
                nj["kind"] = "input";
                break;
            case MultNeuronKind::Addition: {
                nj["kind"] = "addition";
                nj["rank"] = nu.rank;
                json arcs = json::array();
                for (const AdditionArc& a : nu.add_in) {
                    arcs.push_back({{"from", a.from}, {"w", a.weights}});
                }
                nj["in"] = std::move(arcs);
                break;
            }
            case MultNeuronKind::Multiplication: {
                nj["kind"] = "multiplication";
                json arcs = json::array();
                for (const MultiplicationArc& a : nu.mul_in) {
                    json aj;
                    if (a.from_neg >= 0) {
                        aj["pos"] = a.from_pos;
                        aj["neg"] = a.from_neg;
                    } else {
                        aj["from"] = a.from_pos;
                    }
                    aj["exp"] = a.exponent;
                    arcs.push_back(std::move(aj));
                }
                nj["in"] = std::move(arcs);
                break;
            }
        }
        neurons.push_back(std::move(nj));
    }
    j["neurons"] = std::move(neurons);
    return j.dump(2) + "\n";
}

MultNet multnet_from_json_text(const std::string& text) {
    json j;
    try {
        j = json::parse(text);
    } catch (const std::exception& e) {
        throw LoadError(std::string("multnet JSON parse error: ") + e.what());
    }
    if (j.value("format", "") != "splitkit-multnet" || j.value("version", -1) != 1) {
        throw LoadError("not a splitkit-multnet v1 document");
    }
    MultNet g;
    g.inputs = j.at("inputs").get<std::vector<std::int64_t>>();
    g.output = j.at("output").get<std::int64_t>();
    const json& neurons = j.at("neurons");
    g.neurons.resize(neurons.size());
    for (std::size_t v = 0; v < neurons.size(); ++v) {
        const json& nj = neurons[v];
        if (nj.at("id").get<std::size_t>() != v) {
            throw LoadError("multnet neuron ids must equal their array position");
        }
        const std::string kind = nj.at("kind").get<std::string>();
        MultNeuron& nu = g.neurons[v];
        if (kind == "input") {
            nu.kind = MultNeuronKind::Input;
        } else if (kind == "addition") {
            nu.kind = MultNeuronKind::Addition;
            nu.rank = nj.at("rank").get<std::int64_t>();
            for (const json& aj : nj.at("in")) {
                nu.add_in.push_back(
                    {aj.at("from").get<std::int64_t>(), aj.at("w").get<std::vector<double>>()});
            }
        } else if (kind == "multiplication") {
            nu.kind = MultNeuronKind::Multiplication;
            for (const json& aj : nj.at("in")) {
                MultiplicationArc a;
                if (aj.contains("pos")) {
                    a.from_pos = aj.at("pos").get<std::int64_t>();
                    a.from_neg = aj.at("neg").get<std::int64_t>();
                } else {
                    a.from_pos = aj.at("from").get<std::int64_t>();
                }
                a.exponent = aj.at("exp").get<std::int64_t>();
                nu.mul_in.push_back(a);
            }
        } else {
            throw LoadError("unknown multnet neuron kind '" + kind + "'");
        }
    }
    g.validate();
    return g;
}

void save_multnet(const MultNet& g, const std::string& path) {
    std::ofstream out(path);
    if (!out) throw LoadError("cannot write multnet '" + path + "'");
    out << multnet_to_json_text(g);
}

MultNet load_multnet(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw LoadError("cannot open multnet '" + path + "'");
    std::string text((std::istreambuf_iterator<char>(in)), std::istreambuf_iterator<char>());
    return multnet_from_json_text(text);
}

}  // namespace splitkit
