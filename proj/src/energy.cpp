#include "spikekit/energy.hpp"

#include "json.hpp"

#include "spikekit/errors.hpp"

namespace spikekit {

namespace {

bool any_nonzero(const DenseArray& a) {
  for (double v : a.values()) {
    if (v != 0.0) return true;
  }
  return false;
}

double layer_energy(const LayerOps& l, const EnergyCosts& c) {
  return c.e_ac * static_cast<double>(l.ac_count) + c.e_mac * static_cast<double>(l.mac_count) +
         c.e_mac * static_cast<double>(l.constant_adds);
}

nlohmann::json layer_json(const LayerOps& l) {
  nlohmann::json j;
  j["name"] = l.name;
  j["mac_count"] = l.mac_count;
  j["ac_count"] = l.ac_count;
  j["constant_adds"] = l.constant_adds;
  j["spikes"] = l.spikes;
  j["fan_out"] = l.fan_out;
  j["firing_rate"] = l.firing_rate ? nlohmann::json(*l.firing_rate) : nlohmann::json(nullptr);
  j["energy_joules"] = l.energy_joules;
  return j;
}

}  // namespace

OpCountReport count_ops(const FoldedNet& folded, const DenseArray& x, const InferenceResult& run,
                        const EnergyCosts& costs) {
  folded.validate();
  if (run.trains.size() != folded.depth()) throw ContractError("count_ops: spike trains do not match the network");
  if (x.rank() != 3) throw DimensionError("count_ops input must be [T×B×in]");
  const std::uint64_t T = x.dim(0), B = x.dim(1);
  OpCountReport rep;
  rep.costs = costs;
  std::uint64_t nonzero_inputs = 0;
  for (double v : x.values()) nonzero_inputs += v != 0.0;

  for (std::size_t l = 0; l < folded.depth(); ++l) {
    LayerOps ops;
    ops.name = "layer" + std::to_string(l + 1);
    if (l == 0) ops.mac_count = nonzero_inputs * folded.input_weight.dim(0);
    const auto& train = run.trains[l];
    train.validate();
    const auto& stage = folded.stages[l];
    ops.spikes = train.spike_count();
    ops.slots = train.data.size();
    ops.fan_out = stage.weight.dim(0);
    ops.ac_count = ops.spikes * ops.fan_out;
    ops.constant_adds = any_nonzero(stage.constant) ? T * B : 0;
    ops.firing_rate = ops.slots ? static_cast<double>(ops.spikes) / static_cast<double>(ops.slots) : 0.0;
    ops.energy_joules = layer_energy(ops, costs);
    rep.layers.push_back(ops);
  }

  auto& t = rep.totals;
  t.name = "total";
  for (const auto& l : rep.layers) {
    t.mac_count += l.mac_count;
    t.ac_count += l.ac_count;
    t.constant_adds += l.constant_adds;
    t.spikes += l.spikes;
    t.slots += l.slots;
  }
  t.firing_rate = t.slots ? static_cast<double>(t.spikes) / static_cast<double>(t.slots) : 0.0;
  t.energy_joules = layer_energy(t, costs);
  rep.energy_joules = t.energy_joules;
  return rep;
}

OpCountReport measure_energy(const FoldedNet& folded, const DenseArray& x, const EnergyCosts& costs) {
  return count_ops(folded, x, spike_inference(folded, x), costs);
}

std::string OpCountReport::json() const {
  nlohmann::json j;
  j["layers"] = nlohmann::json::array();
  for (const auto& l : layers) j["layers"].push_back(layer_json(l));
  auto tot = layer_json(totals);
  tot.erase("name");
  tot.erase("fan_out");
  j["total"] = tot;
  j["mac_count"] = totals.mac_count;
  j["ac_count"] = totals.ac_count;
  j["constant_adds"] = totals.constant_adds;
  j["firing_rate"] = totals.firing_rate.value_or(0.0);
  j["energy_joules"] = energy_joules;
  j["costs"] = {{"e_ac_joules", costs.e_ac}, {"e_mac_joules", costs.e_mac}};
  return j.dump(2);
}

}  // namespace spikekit
