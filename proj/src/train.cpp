#include "amint/train.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <cstring>
#include <numeric>

#include "amint/eval.hpp"

namespace amint {

void TrainConfig::validate() const {
    if (learning_rate <= 0.0 || learning_rate > 1.0)
        throw config_error("TrainConfig: learning_rate must lie in (0,1]");
    if (max_epochs < 0) throw config_error("TrainConfig: max_epochs must be nonnegative");
    if (early_stop_patience < 0)
        throw config_error("TrainConfig: early_stop_patience must be nonnegative");
    if (max_epochs > 0 && early_stop_patience >= max_epochs)
        throw config_error("TrainConfig: early_stop_patience must be smaller than max_epochs");
    if (batch_size <= 0 || batch_size % 2 != 0)
        throw config_error("TrainConfig: batch_size must be a positive even number");
    weights.validate();
}

namespace {

constexpr double kAuditedValFraction = 0.1;
constexpr size_t kFitProbePerRole = 512;

std::vector<int64_t> sorted_ids(const std::vector<SplitRecord>& records) {
    auto ids = ids_of(records);
    std::sort(ids.begin(), ids.end());
    return ids;
}

// Deterministic validation carve: a pure function of the id set and the seed.
std::pair<std::vector<int64_t>, std::vector<int64_t>> carve_validation(std::vector<int64_t> ids,
                                                                       size_t val_count,
                                                                       uint64_t seed) {
    std::sort(ids.begin(), ids.end());
    if (val_count > ids.size()) val_count = ids.size();
    Rng rng(derive_seed(seed, "audited-val"));
    rng.shuffle(ids);
    auto mid = ids.begin() + static_cast<std::ptrdiff_t>(val_count);
    std::vector<int64_t> val(ids.begin(), mid);
    std::vector<int64_t> rest(mid, ids.end());
    std::sort(val.begin(), val.end());
    std::sort(rest.begin(), rest.end());
    return {std::move(rest), std::move(val)};
}

std::vector<int64_t> cap_ids(std::vector<int64_t> ids, size_t cap, uint64_t seed, const char* tag) {
    std::sort(ids.begin(), ids.end());
    if (ids.size() <= cap) return ids;
    Rng rng(derive_seed(seed, tag));
    rng.shuffle(ids);
    ids.resize(cap);
    std::sort(ids.begin(), ids.end());
    return ids;
}

Tensor concat_rows(const Tensor& a, const Tensor& b, const Tensor& c) {
    std::vector<int> shape = a.shape();
    shape[0] = a.dim(0) + (b.empty() ? 0 : b.dim(0)) + c.dim(0);
    Tensor out(shape);
    float* dst = out.data();
    std::memcpy(dst, a.data(), a.numel() * sizeof(float));
    dst += a.numel();
    if (!b.empty()) {
        std::memcpy(dst, b.data(), b.numel() * sizeof(float));
        dst += b.numel();
    }
    std::memcpy(dst, c.data(), c.numel() * sizeof(float));
    return out;
}

std::vector<int> iota_rows(int begin, int count) {
    std::vector<int> rows(static_cast<size_t>(count));
    std::iota(rows.begin(), rows.end(), begin);
    return rows;
}

struct EarlyStopper {
    int patience = 0;
    double best = -1.0;
    int since = 0;

    bool improved(double criterion) {
        if (criterion > best) {
            best = criterion;
            since = 0;
            return true;
        }
        ++since;
        return false;
    }
    bool should_stop() const { return since > patience; }
};

double group_sum_squares(const std::vector<ParamRef>& params) {
    double total = 0.0;
    for (const auto& p : params) total += sum_squares(*p.value);
    return total;
}

double group_grad_norm(const std::vector<ParamRef>& params) {
    double total = 0.0;
    for (const auto& p : params) total += sum_squares(*p.grad);
    return std::sqrt(total);
}

struct MembershipEvalSet {
    Tensor images;
    std::vector<float> labels;
};

MembershipEvalSet membership_set(const Dataset& ds, const std::vector<int64_t>& member_ids,
                                 const std::vector<int64_t>& external_ids) {
    std::vector<int64_t> ids = member_ids;
    ids.insert(ids.end(), external_ids.begin(), external_ids.end());
    MembershipEvalSet set;
    set.images = gather_images(ds, ids);
    set.labels.assign(member_ids.size(), 1.0f);
    set.labels.insert(set.labels.end(), external_ids.size(), 0.0f);
    return set;
}

[[noreturn]] void abort_non_finite(const char* where, int step, double audited_raw, double mint_raw,
                                   const std::string& detail) {
    char buf[256];
    std::snprintf(buf, sizeof buf, "%s aborted at step %d: non-finite loss (audited_raw=%g mint_raw=%g): ",
                  where, step, audited_raw, mint_raw);
    throw numeric_error(buf + detail);
}

}  // namespace

std::pair<std::vector<int64_t>, std::vector<int64_t>> audited_validation_carve(
    const std::vector<SplitRecord>& members_fit, size_t member_count, uint64_t seed) {
    const size_t val_count =
        static_cast<size_t>(std::llround(kAuditedValFraction * static_cast<double>(member_count)));
    return carve_validation(sorted_ids(members_fit), val_count, seed);
}

TrainState train_active(EnhancedModel& model, const Dataset& ds, const SplitResult& split,
                        const TrainConfig& cfg, const TrainHooks& hooks) {
    cfg.validate();
    if (ds.count() == 0) throw config_error("train_active: empty dataset");
    if (split.members.empty() || split.externals.empty())
        throw config_error("train_active: both roles must be nonempty");

    auto members_fit = filter_mint(split.members, MintSplit::FIT);
    auto members_eval = filter_mint(split.members, MintSplit::EVAL);
    auto externals_fit = filter_mint(split.externals, MintSplit::FIT);
    auto externals_eval = filter_mint(split.externals, MintSplit::EVAL);
    if (members_eval.empty() || externals_eval.empty())
        throw config_error("train_active: need nonempty mint-eval records for both roles");

    auto [fit_used_ids, val_ids] = audited_validation_carve(members_fit, split.members.size(), cfg.seed);
    if (val_ids.empty())
        throw config_error("train_active: too few members for a validation carve");
    auto ext_fit_ids = sorted_ids(externals_fit);

    int half = cfg.batch_size / 2;
    if (fit_used_ids.size() < static_cast<size_t>(half) ||
        ext_fit_ids.size() < static_cast<size_t>(half))
        throw config_error("train_active: batch_size exceeds the usable per-role record count");

    MixedBatchStream stream(ds, fit_used_ids, ext_fit_ids, cfg.batch_size,
                            derive_seed(cfg.seed, "mixed-stream"));

    auto eval_member_ids = sorted_ids(members_eval);
    auto eval_ext_ids = sorted_ids(externals_eval);
    int side_k = std::max<int>(
        1, static_cast<int>(std::llround(static_cast<double>(half) *
                                         static_cast<double>(eval_member_ids.size()) /
                                         static_cast<double>(fit_used_ids.size()))));

    MembershipEvalSet fit_probe =
        membership_set(ds, cap_ids(fit_used_ids, kFitProbePerRole, cfg.seed, "fit-probe-members"),
                       cap_ids(ext_fit_ids, kFitProbePerRole, cfg.seed, "fit-probe-externals"));
    MembershipEvalSet eval_set = membership_set(ds, eval_member_ids, eval_ext_ids);
    Tensor val_images = gather_images(ds, val_ids);
    std::vector<int> val_labels = gather_labels(ds, val_ids);

    auto all_params = model.all_params();
    Adam opt(all_params, {cfg.learning_rate, 0.9, 0.999, 1e-8});
    LossNormalizer norm_audited, norm_mint;
    EarlyStopper stopper{cfg.early_stop_patience};
    std::vector<Tensor> best_snapshot;
    TrainState state;

    const bool use_audited = cfg.weights.lambda1 != 0.0;
    const bool use_mint = cfg.weights.lambda2 != 0.0;

    int global_step = 0;
    MixedBatch batch;
    for (int epoch = 0; epoch < cfg.max_epochs; ++epoch) {
        stream.start_epoch(epoch);
        auto side_order = eval_member_ids;
        Rng side_rng(derive_seed(cfg.seed, "side-stream", static_cast<uint64_t>(epoch)));
        side_rng.shuffle(side_order);
        size_t side_cursor = 0;

        double sum_total = 0.0, sum_audited = 0.0, sum_mint = 0.0;
        int steps = 0;
        while (stream.next(batch)) {
            std::vector<float> membership = batch.membership_labels;
            if (hooks.shuffle_membership) hooks.shuffle_membership->shuffle(membership);

            std::vector<int64_t> side_ids(static_cast<size_t>(side_k));
            for (auto& id : side_ids) {
                id = side_order[side_cursor];
                if (++side_cursor == side_order.size()) side_cursor = 0;
            }
            Tensor side_images = gather_images(ds, side_ids);
            std::vector<int> audited_labels = batch.member_class_labels;
            {
                auto side_labels = gather_labels(ds, side_ids);
                audited_labels.insert(audited_labels.end(), side_labels.begin(), side_labels.end());
            }

            Tensor uni = concat_rows(batch.member_images, side_images, batch.external_images);
            std::vector<int> audited_rows =
                use_audited ? iota_rows(0, half + side_k) : std::vector<int>{};
            std::vector<int> mint_rows;
            if (use_mint) {
                mint_rows = iota_rows(0, half);
                auto tail = iota_rows(half + side_k, half);
                mint_rows.insert(mint_rows.end(), tail.begin(), tail.end());
            }

            double audited_raw = 0.0, mint_raw = 0.0;
            MultiTaskLossOutput combo;
            try {
                model.zero_grads();
                auto out = model.joint_forward(uni, audited_rows, mint_rows, true);
                Tensor dlogits, dprobs;
                if (use_audited) {
                    audited_raw = audited_loss_grad(out.logits, audited_labels, dlogits);
                    norm_audited.update(audited_raw);
                    float scale = static_cast<float>(cfg.weights.lambda1 / norm_audited.value());
                    for (size_t i = 0; i < dlogits.numel(); ++i) dlogits[i] *= scale;
                }
                if (use_mint) {
                    mint_raw = mint_loss_grad(out.mint_probs, membership, dprobs);
                    norm_mint.update(mint_raw);
                    float scale = static_cast<float>(cfg.weights.lambda2 / norm_mint.value());
                    for (size_t i = 0; i < dprobs.numel(); ++i) dprobs[i] *= scale;
                }
                combo = combine(audited_raw, mint_raw, norm_audited, norm_mint, cfg.weights,
                                model.param_sum_squares());
                model.joint_backward(dlogits, dprobs);
                add_l2_gradient(all_params, cfg.weights.l2_coeff);
                opt.step();
            } catch (const numeric_error& e) {
                abort_non_finite("train_active", global_step, audited_raw, mint_raw, e.what());
            }

            if (hooks.on_step)
                hooks.on_step({epoch, global_step, combo.audited_raw, combo.mint_raw,
                               combo.audited_normed, combo.mint_normed, combo.reg, combo.total});
            sum_total += combo.total;
            sum_audited += combo.audited_raw;
            sum_mint += combo.mint_raw;
            ++global_step;
            ++steps;
        }

        EpochRecord rec;
        rec.epoch = epoch;
        rec.mint_fit_acc = mint_accuracy(model, fit_probe.images, fit_probe.labels);
        rec.mint_eval_acc = mint_accuracy(model, eval_set.images, eval_set.labels);
        rec.audited_val_acc = audited_accuracy(model, val_images, val_labels);
        if (steps > 0) {
            rec.mean_total = sum_total / steps;
            rec.mean_audited_raw = sum_audited / steps;
            rec.mean_mint_raw = sum_mint / steps;
        }
        state.history.push_back(rec);
        state.epoch = epoch + 1;
        if (hooks.on_epoch) hooks.on_epoch(rec);

        double criterion = 0.5 * (rec.mint_eval_acc + rec.audited_val_acc);
        if (stopper.improved(criterion)) {
            best_snapshot = snapshot_values(all_params);
            state.best_epoch = epoch;
            state.best_criterion = criterion;
        }
        if (stopper.should_stop()) {
            state.early_stopped = true;
            break;
        }
    }
    if (state.best_epoch >= 0) restore_values(all_params, best_snapshot);
    return state;
}

std::pair<EnhancedModel, TrainState> train_audited_only(const BackboneSpec& spec, const Dataset& ds,
                                                        const std::vector<SplitRecord>& members,
                                                        const TrainConfig& cfg, const TapSetup setup,
                                                        const TrainHooks& hooks) {
    cfg.validate();
    if (members.empty()) throw config_error("train_audited_only: no member records");
    EnhancedModel model(spec, setup, MintHeadSpec{}, derive_seed(cfg.seed, "model-init"));

    auto members_fit = filter_mint(members, MintSplit::FIT);
    auto members_eval = filter_mint(members, MintSplit::EVAL);
    auto [fit_used_ids, val_ids] = audited_validation_carve(members_fit, members.size(), cfg.seed);
    if (val_ids.empty())
        throw config_error("train_audited_only: too few members for a validation carve");
    std::vector<int64_t> train_ids = fit_used_ids;
    {
        auto eval_ids = sorted_ids(members_eval);
        train_ids.insert(train_ids.end(), eval_ids.begin(), eval_ids.end());
        std::sort(train_ids.begin(), train_ids.end());
    }
    if (train_ids.size() < static_cast<size_t>(cfg.batch_size))
        throw config_error("train_audited_only: batch_size exceeds the usable member count");

    Tensor val_images = gather_images(ds, val_ids);
    std::vector<int> val_labels = gather_labels(ds, val_ids);

    std::vector<ParamRef> opt_params = model.shared_params();
    {
        auto tail = model.audited_only_params();
        opt_params.insert(opt_params.end(), tail.begin(), tail.end());
    }
    Adam opt(opt_params, {cfg.learning_rate, 0.9, 0.999, 1e-8});
    EarlyStopper stopper{cfg.early_stop_patience};
    std::vector<Tensor> best_snapshot;
    TrainState state;

    int global_step = 0;
    for (int epoch = 0; epoch < cfg.max_epochs; ++epoch) {
        auto order = train_ids;
        Rng shuffle_rng(derive_seed(cfg.seed, "audited-batches", static_cast<uint64_t>(epoch)));
        shuffle_rng.shuffle(order);
        int steps = static_cast<int>(order.size()) / cfg.batch_size;

        double sum_total = 0.0, sum_audited = 0.0;
        for (int s = 0; s < steps; ++s) {
            std::vector<int64_t> ids(order.begin() + static_cast<std::ptrdiff_t>(s) * cfg.batch_size,
                                     order.begin() +
                                         static_cast<std::ptrdiff_t>(s + 1) * cfg.batch_size);
            Tensor images = gather_images(ds, ids);
            std::vector<int> labels = gather_labels(ds, ids);

            double audited_raw = 0.0, total = 0.0, reg = 0.0;
            try {
                model.zero_grads();
                auto out = model.joint_forward(images, iota_rows(0, cfg.batch_size), {}, true);
                Tensor dlogits;
                audited_raw = audited_loss_grad(out.logits, labels, dlogits);
                reg = cfg.weights.l2_coeff * group_sum_squares(opt_params);
                total = audited_raw + reg;
                if (!std::isfinite(total)) throw numeric_error("total loss is not finite");
                model.joint_backward(dlogits, Tensor{});
                add_l2_gradient(opt_params, cfg.weights.l2_coeff);
                opt.step();
            } catch (const numeric_error& e) {
                abort_non_finite("train_audited_only", global_step, audited_raw, 0.0, e.what());
            }

            if (hooks.on_step)
                hooks.on_step({epoch, global_step, audited_raw, 0.0, audited_raw, 0.0, reg, total});
            sum_total += total;
            sum_audited += audited_raw;
            ++global_step;
        }

        EpochRecord rec;
        rec.epoch = epoch;
        rec.audited_val_acc = audited_accuracy(model, val_images, val_labels);
        if (steps > 0) {
            rec.mean_total = sum_total / steps;
            rec.mean_audited_raw = sum_audited / steps;
        }
        state.history.push_back(rec);
        state.epoch = epoch + 1;
        if (hooks.on_epoch) hooks.on_epoch(rec);

        if (stopper.improved(rec.audited_val_acc)) {
            best_snapshot = snapshot_values(opt_params);
            state.best_epoch = epoch;
            state.best_criterion = rec.audited_val_acc;
        }
        if (stopper.should_stop()) {
            state.early_stopped = true;
            break;
        }
    }
    if (state.best_epoch >= 0) restore_values(opt_params, best_snapshot);
    return {std::move(model), std::move(state)};
}

std::pair<MintHead, TrainState> train_passive_mint(EnhancedModel& frozen, const Dataset& ds,
                                                   const SplitResult& split,
                                                   const MintHeadSpec& head_spec,
                                                   const TrainConfig& cfg,
                                                   const TrainHooks& hooks) {
    cfg.validate();
    auto frozen_params = frozen.all_params();
    auto frozen_snapshot = snapshot_values(frozen_params);

    auto members_fit = filter_mint(split.members, MintSplit::FIT);
    auto members_eval = filter_mint(split.members, MintSplit::EVAL);
    auto externals_fit = filter_mint(split.externals, MintSplit::FIT);
    auto externals_eval = filter_mint(split.externals, MintSplit::EVAL);
    if (members_eval.empty() || externals_eval.empty())
        throw config_error("train_passive_mint: need nonempty mint-eval records for both roles");

    auto [fit_member_ids, val_ids] =
        audited_validation_carve(members_fit, split.members.size(), cfg.seed);
    auto ext_fit_ids = sorted_ids(externals_fit);

    int half = cfg.batch_size / 2;
    if (fit_member_ids.size() < static_cast<size_t>(half) ||
        ext_fit_ids.size() < static_cast<size_t>(half))
        throw config_error("train_passive_mint: batch_size exceeds the usable per-role record count");

    MintHead head(head_spec,
                  tap_output_shape(frozen.spec(), frozen.tap_config().taps[0]).c,
                  tap_output_shape(frozen.spec(), frozen.tap_config().taps[1]).c,
                  derive_seed(cfg.seed, "passive-dropout"));
    {
        Rng init_rng(derive_seed(cfg.seed, "passive-init"));
        head.init(init_rng);
    }

    MixedBatchStream stream(ds, fit_member_ids, ext_fit_ids, cfg.batch_size,
                            derive_seed(cfg.seed, "passive-stream"));
    MembershipEvalSet fit_probe =
        membership_set(ds, cap_ids(fit_member_ids, kFitProbePerRole, cfg.seed, "fit-probe-members"),
                       cap_ids(ext_fit_ids, kFitProbePerRole, cfg.seed, "fit-probe-externals"));
    MembershipEvalSet eval_set = membership_set(ds, sorted_ids(members_eval), sorted_ids(externals_eval));

    auto head_params = head.params();
    Adam opt(head_params, {cfg.learning_rate, 0.9, 0.999, 1e-8});
    EarlyStopper stopper{cfg.early_stop_patience};
    std::vector<Tensor> best_snapshot;
    TrainState state;

    int global_step = 0;
    MixedBatch batch;
    for (int epoch = 0; epoch < cfg.max_epochs; ++epoch) {
        stream.start_epoch(epoch);
        double sum_total = 0.0, sum_mint = 0.0;
        int steps = 0;
        while (stream.next(batch)) {
            std::vector<float> membership = batch.membership_labels;
            if (hooks.shuffle_membership) hooks.shuffle_membership->shuffle(membership);

            Tensor uni = concat_rows(batch.member_images, Tensor{}, batch.external_images);
            double mint_raw = 0.0, total = 0.0, reg = 0.0;
            try {
                AADPair aad = frozen.extract_aad(uni, false);
                Tensor probs = head.forward(aad, true);
                Tensor dprobs;
                mint_raw = mint_loss_grad(probs, membership, dprobs);
                reg = cfg.weights.l2_coeff * group_sum_squares(head_params);
                total = mint_raw + reg;
                if (!std::isfinite(total)) throw numeric_error("total loss is not finite");
                head.zero_grads();
                head.backward(dprobs, nullptr);
                add_l2_gradient(head_params, cfg.weights.l2_coeff);
                opt.step();
            } catch (const numeric_error& e) {
                abort_non_finite("train_passive_mint", global_step, 0.0, mint_raw, e.what());
            }

            if (hooks.on_step)
                hooks.on_step({epoch, global_step, 0.0, mint_raw, 0.0, mint_raw, reg, total});
            sum_total += total;
            sum_mint += mint_raw;
            ++global_step;
            ++steps;
        }

        EpochRecord rec;
        rec.epoch = epoch;
        rec.mint_fit_acc = mint_accuracy(frozen, head, fit_probe.images, fit_probe.labels);
        rec.mint_eval_acc = mint_accuracy(frozen, head, eval_set.images, eval_set.labels);
        if (steps > 0) {
            rec.mean_total = sum_total / steps;
            rec.mean_mint_raw = sum_mint / steps;
        }
        state.history.push_back(rec);
        state.epoch = epoch + 1;
        if (hooks.on_epoch) hooks.on_epoch(rec);

        if (stopper.improved(rec.mint_eval_acc)) {
            best_snapshot = snapshot_values(head_params);
            state.best_epoch = epoch;
            state.best_criterion = rec.mint_eval_acc;
        }
        if (stopper.should_stop()) {
            state.early_stopped = true;
            break;
        }
    }
    if (state.best_epoch >= 0) restore_values(head_params, best_snapshot);
    verify_params_unchanged(frozen_params, frozen_snapshot, "frozen audited model");
    return {std::move(head), std::move(state)};
}

RoutingReport gradient_routing_audit(EnhancedModel& model, const MixedBatch& batch) {
    if (batch.member_images.empty() || batch.external_images.empty())
        throw config_error("gradient_routing_audit: batch needs both roles");
    RoutingReport report;

    model.zero_grads();
    {
        int n = batch.member_images.dim(0);
        auto out = model.joint_forward(batch.member_images, iota_rows(0, n), {}, true);
        Tensor dlogits;
        audited_loss_grad(out.logits, batch.member_class_labels, dlogits);
        model.joint_backward(dlogits, Tensor{});
    }
    report.audited_pass_shared = group_grad_norm(model.shared_params());
    report.audited_pass_audited = group_grad_norm(model.audited_only_params());
    report.audited_pass_mint = group_grad_norm(model.mint_params());

    model.zero_grads();
    {
        int n = batch.external_images.dim(0);
        auto out = model.joint_forward(batch.external_images, {}, iota_rows(0, n), true);
        std::vector<float> labels(static_cast<size_t>(n), 0.0f);
        Tensor dprobs;
        mint_loss_grad(out.mint_probs, labels, dprobs);
        model.joint_backward(Tensor{}, dprobs);
    }
    report.mint_pass_shared = group_grad_norm(model.shared_params());
    report.mint_pass_audited = group_grad_norm(model.audited_only_params());
    report.mint_pass_mint = group_grad_norm(model.mint_params());
    return report;
}

void verify_params_unchanged(const std::vector<ParamRef>& params,
                             const std::vector<Tensor>& snapshot, const std::string& what) {
    if (params.size() != snapshot.size())
        throw invariant_error(what + ": parameter count changed");
    for (size_t i = 0; i < params.size(); ++i) {
        const Tensor& now = *params[i].value;
        const Tensor& then = snapshot[i];
        if (!now.same_shape(then)) throw invariant_error(what + ": shape of " + params[i].name + " changed");
        if (std::memcmp(now.data(), then.data(), now.numel() * sizeof(float)) != 0)
            throw invariant_error(what + ": values of " + params[i].name + " changed");
    }
}

}  // namespace amint
