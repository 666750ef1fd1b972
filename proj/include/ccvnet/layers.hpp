#pragma once

// Parameter layout helpers shared by every network stage.

#include "ccvnet/param_store.hpp"

#include <string>

namespace ccvnet::layers {

enum class Init { He, Xavier, Small };

/// Registers "<name>.w" [in x out] and "<name>.b" [out].
void add_dense(ParamStore &p, const std::string &name, std::size_t in, std::size_t out, Init init,
               Rng &rng);
/// Registers "<name>.w" [out x in x kernel] and "<name>.b" [out], He-initialised.
void add_conv(ParamStore &p, const std::string &name, std::size_t in, std::size_t out,
              std::size_t kernel, Rng &rng);
/// Registers the twelve LSTM tensors under "<name>.{w,u,b}_{i,f,o,g}".
/// Xavier-uniform matrices; forget-gate bias starts at +1.
void add_lstm(ParamStore &p, const std::string &name, std::size_t in, std::size_t hidden, Rng &rng);

Var dense(const Var &x, const ParamStore &p, const std::string &name);
Var conv(const Var &x, const ParamStore &p, const std::string &name);
LstmParams lstm(const ParamStore &p, const std::string &name);

/// Checks that `actual` holds exactly the tensors of `expected` with equal
/// shapes. Throws StateError naming `stage` and the offending entry.
void require_layout(const std::string &stage, const ParamStore &expected,
                    const ParamStore &actual);

/// Stacks equally shaped tensors along a new leading batch axis.
Tensor stack(const std::vector<const Tensor *> &items);

} // namespace ccvnet::layers
