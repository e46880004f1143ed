#ifndef SPLITKIT_MAXOUT_MULT_HPP
#define SPLITKIT_MAXOUT_MULT_HPP

#include <cstdint>
#include <string>
#include <vector>

#include "splitkit/tensor.hpp"

namespace splitkit {

// Acyclic graphs of input, rank-k Maxout addition and natural-exponent
// multiplication neurons. Neurons are stored in topological order: every
// arc references a strictly smaller index.

enum class MultNeuronKind { Input, Addition, Multiplication };

struct AdditionArc {
    std::int64_t from = -1;
    std::vector<double> weights;  // length = consumer rank
};

struct MultiplicationArc {
    std::int64_t from_pos = -1;
    std::int64_t from_neg = -1;   // >= 0 marks a labeled pair (value pos - neg)
    std::int64_t exponent = 1;    // natural number
};

struct MultNeuron {
    MultNeuronKind kind = MultNeuronKind::Input;
    std::int64_t rank = 1;                      // addition neurons
    std::vector<AdditionArc> add_in;
    std::vector<MultiplicationArc> mul_in;
};

struct MultNet {
    std::vector<MultNeuron> neurons;
    std::vector<std::int64_t> inputs;  // ids of input neurons, assignment order
    std::int64_t output = -1;

    void validate() const;
};

double eval_multnet(const MultNet& g, const std::vector<double>& x);
std::vector<double> eval_multnet_all(const MultNet& g, const std::vector<double>& x);

struct MultSplitOptions {
    bool split_inputs = true;     // false yields the monotone variant
    std::int64_t max_fan_in = 4;  // multiplication expansion guard
    std::int64_t max_exponent = 3;
};

struct MultSplit {
    MultNet pos, neg;
};

// Neuron-by-neuron DC split: inputs become +/- projections, addition
// neurons absorb weight signs, multiplication neurons expand the signed
// binomial product into one positive and one negative collector.
MultSplit split_multnet(const MultNet& g, const MultSplitOptions& opt = {});

enum class MultNetClass { General, InputConvex, Monotone };
const char* multnet_class_name(MultNetClass c);

// Strongest label by weight-sign inspection: all weights >= 0 is monotone;
// negatives only on input-incident arcs is input-convex.
MultNetClass classify_multnet(const MultNet& g);

// Polynomial as exponent-vector (over the net inputs) -> coefficient.
struct Polynomial {
    std::vector<std::pair<std::vector<std::int64_t>, double>> terms;
};

struct PosynomialMax {
    std::vector<Polynomial> branches;  // the represented function is their max
};

struct ExtractCaps {
    std::int64_t max_branches = 4096;
    std::int64_t max_terms = 2048;
    std::int64_t max_degree = 16;
};

PosynomialMax posynomial_max_extract(const MultNet& g, const ExtractCaps& caps = {});
double eval_posynomial_max(const PosynomialMax& rep, const std::vector<double>& x);

std::string multnet_to_json_text(const MultNet& g);
MultNet multnet_from_json_text(const std::string& text);
void save_multnet(const MultNet& g, const std::string& path);
MultNet load_multnet(const std::string& path);

}  // namespace splitkit

#endif
