#include "tppkit/model.hpp"

#include <algorithm>
#include <cmath>

namespace tppkit::model {

using namespace tppkit::ad;

void ModelConfig::validate() const {
    if (encoder != "gru" && encoder != "sa") throw value_error("unknown encoder: " + encoder);
    dec::decoder_from_name(decoder);
    enc::pooling_from_name(pooling);
    if (hidden == 0 || hidden % 2 != 0)
        throw value_error("hidden size must be a positive even integer");
    if (layers == 0) throw value_error("layers must be >= 1");
    if (heads == 0 || hidden % heads != 0) throw value_error("heads must divide hidden");
    if (lnm_components == 0) throw value_error("lnm_components must be >= 1");
}

TppModel::TppModel(const ModelConfig& cfg, int num_marks, double beta_hat, std::uint64_t seed)
    : cfg_(cfg), num_marks_(num_marks), beta_hat_(beta_hat), params_(seed) {
    cfg.validate();
    if (num_marks < 1) throw value_error("TppModel: need at least one mark");
    if (!(beta_hat > 0)) throw value_error("TppModel: beta_hat must be positive");
    embedding_ = enc::LabelEmbedding(params_, "emb", static_cast<std::size_t>(num_marks),
                                     cfg.hidden, enc::pooling_from_name(cfg.pooling));
    tcfg_ = enc::TemporalEncodingConfig{cfg.hidden, beta_hat};
    tcfg_.validate();
    if (cfg.encoder == "gru") {
        encoder_ = std::make_unique<enc::GruEncoder>(params_, "enc", cfg.hidden, cfg.hidden);
    } else {
        encoder_ = std::make_unique<enc::SaEncoder>(params_, "enc", cfg.hidden, cfg.heads,
                                                    cfg.layers);
    }
    dec::DecoderConfig dcfg;
    dcfg.num_marks = static_cast<std::size_t>(num_marks);
    dcfg.hidden = cfg.hidden;
    dcfg.d_model = cfg.hidden;
    dcfg.heads = cfg.heads;
    dcfg.lnm_components = cfg.lnm_components;
    dcfg.beta_hat = beta_hat;
    dcfg.task = cfg.task;
    auto kind = dec::decoder_from_name(cfg.decoder);
    decoder_ = dec::make_decoder(kind, params_, "dec", dcfg);
    use_base_ = decoder_->wants_base_intensity();
    if (use_base_) base_ = dec::BaseIntensity(params_, "base", dcfg.num_marks);
}

void TppModel::set_train_mode(bool train) {
    train_mode_ = train;
    decoder_->set_norm_mode(train ? mono::NormMode::kTrain : mono::NormMode::kEval);
}

void TppModel::commit_norm_stats() { decoder_->commit_norm_stats(); }

bool TppModel::has_attention() const {
    return cfg_.encoder == "sa" || cfg_.decoder == "attn-mc" || cfg_.decoder == "attn-cm";
}

std::vector<NodePtr> TppModel::encode_events(const EventSequence& seq,
                                             std::vector<double>& times) {
    std::vector<NodePtr> xs;
    xs.reserve(seq.events.size());
    times.clear();
    times.reserve(seq.events.size());
    for (const Event& e : seq.events) {
        xs.push_back(enc::temporal_encode(embedding_, tcfg_, e));
        times.push_back(e.time);
    }
    return encoder_->encode(xs, times);
}

dec::DecoderOutput TppModel::decode_interval(const dec::DecodeContext& ctx, std::size_t hist,
                                             double t, double t_prev,
                                             const dec::McIntegrator& integ,
                                             bool need_big_lambda) {
    dec::DecoderOutput inner = decoder_->eval(ctx, hist, t, t_prev, integ, need_big_lambda);
    if (!use_base_) return inner;
    return base_.mix(inner, t, t_prev);
}

lik::SequenceTerms TppModel::sequence_terms(const EventSequence& seq, std::size_t mc_samples,
                                            Rng* mc_rng) {
    std::vector<double> times;
    std::vector<NodePtr> z = encode_events(seq, times);
    dec::DecodeContext ctx{&z, &times};
    dec::McIntegrator integ{mc_samples, mc_rng != nullptr, mc_rng};
    attention_ = AttentionDump{};
    if (cfg_.encoder == "sa") {
        attention_.source = "encoder";
        attention_.encoder_layers = encoder_->attention_trace();
    }
    bool attn_dec = cfg_.decoder == "attn-mc" || cfg_.decoder == "attn-cm";
    if (attn_dec) attention_.source = "decoder";

    lik::SequenceTerms terms;
    std::size_t n = seq.events.size();
    for (std::size_t i = 0; i < n; ++i) {
        double t = times[i];
        double t_prev = i > 0 ? times[i - 1] : seq.window_lo;
        auto out = decode_interval(ctx, i, t, t_prev, integ, true);
        if (attn_dec) attention_.decoder.push_back(out.attention);
        terms.events.push_back({out.lambda, out.big_lambda});
    }
    double t_prev = n > 0 ? times[n - 1] : seq.window_lo;
    auto tail = decode_interval(ctx, n, seq.window_hi, t_prev, integ, true);
    terms.tail_big_lambda = tail.big_lambda;
    return terms;
}

std::vector<double> TppModel::intensity_at(const EventSequence& seq, double t) {
    std::vector<double> times;
    std::vector<NodePtr> z = encode_events(seq, times);
    dec::DecodeContext ctx{&z, &times};
    std::size_t hist = 0;
    while (hist < times.size() && times[hist] < t) ++hist;
    double t_prev = hist > 0 ? times[hist - 1] : seq.window_lo;
    dec::McIntegrator integ{1, false, nullptr};
    auto out = decode_interval(ctx, hist, t, t_prev, integ, false);
    return out.lambda->value.data();
}

std::map<std::string, Tensor> TppModel::buffer_values() {
    std::map<std::string, Tensor> out;
    for (auto& [name, tensor] : decoder_->norm_buffers()) out.emplace(name, *tensor);
    return out;
}

void TppModel::load_buffers(const std::map<std::string, Tensor>& bufs) {
    for (auto& [name, tensor] : decoder_->norm_buffers()) {
        auto it = bufs.find(name);
        if (it == bufs.end()) throw value_error("checkpoint is missing buffer: " + name);
        *tensor = it->second;
    }
}

lik::MetricsReport evaluate_dataset(TppModel& model, const io::DatasetFile& data,
                                    const EvalOptions& opts) {
    if (data.num_marks != model.num_marks())
        throw value_error("evaluate: dataset and model disagree on the number of marks");
    if (data.task != model.config().task)
        throw value_error("evaluate: dataset and model disagree on the task");
    model.set_train_mode(false);
    lik::MetricsReport report;
    std::vector<double> lls, lengths;
    std::vector<int> predictions, truth;
    std::vector<std::vector<double>> scores;
    std::vector<std::vector<std::uint8_t>> score_truth;
    int m = data.num_marks;
    for (std::size_t si = 0; si < data.sequences.size(); ++si) {
        const EventSequence& seq = data.sequences[si];
        Rng stream(Rng::derive(opts.mc_seed, si));
        auto terms = model.sequence_terms(seq, opts.mc_samples, &stream);
        auto ll = data.task == Task::kMultiClass ? lik::loglik_multiclass(terms, seq)
                                                 : lik::loglik_multilabel(terms, seq);
        lls.push_back(ll.value());
        lengths.push_back(seq.length());
        report.num_events += seq.events.size();
        for (std::size_t i = 0; i < seq.events.size(); ++i) {
            const auto& lambda = terms.events[i].lambda->value.data();
            const auto& big = terms.events[i].big_lambda->value.data();
            if (data.task == Task::kMultiClass) {
                int best = 0;
                for (int k = 1; k < m; ++k)
                    if (lambda[k] > lambda[best]) best = k;
                predictions.push_back(best);
                truth.push_back(seq.events[i].labels[0]);
            } else {
                scores.push_back(lik::conditional_density(lambda, big));
                std::vector<std::uint8_t> row(m, 0);
                for (int mark : seq.events[i].labels) row[mark] = 1;
                score_truth.push_back(std::move(row));
            }
        }
    }
    report.per_sequence_loglik = lls;
    report.num_sequences = data.sequences.size();
    report.nll_per_time = lik::nll_per_time(lls, lengths);
    if (data.task == Task::kMultiClass) {
        if (!predictions.empty())
            report.weighted_f1 = lik::weighted_f1(predictions, truth, m);
    } else {
        if (!scores.empty()) report.weighted_roc_auc = lik::weighted_roc_auc(scores, score_truth, m);
    }
    return report;
}

lik::SequenceTerms hawkes_oracle_terms(const hawkes::HawkesParams& params,
                                       const EventSequence& seq) {
    lik::SequenceTerms terms;
    std::size_t n = seq.events.size();
    for (std::size_t i = 0; i < n; ++i) {
        double t = seq.events[i].time;
        double t_prev = i > 0 ? seq.events[i - 1].time : seq.window_lo;
        lik::IntervalTerm term;
        term.lambda = constant(Tensor::vector(hawkes::intensity(params, seq, t)));
        term.big_lambda = constant(Tensor::vector(hawkes::compensator(params, seq, t_prev, t)));
        terms.events.push_back(std::move(term));
    }
    double t_prev = n > 0 ? seq.events[n - 1].time : seq.window_lo;
    terms.tail_big_lambda =
        constant(Tensor::vector(hawkes::compensator(params, seq, t_prev, seq.window_hi)));
    return terms;
}

}  // namespace tppkit::model
