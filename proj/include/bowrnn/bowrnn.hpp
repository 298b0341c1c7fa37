// Copyright 2026 The bowrnn Authors.
//
// Licensed under the Apache License, Version 2.0 (the "License");
// you may not use this file except in compliance with the License.
// You may obtain a copy of the License at
//
//    http://www.apache.org/licenses/LICENSE-2.0
//
// Unless required by applicable law or agreed to in writing, software
// distributed under the License is distributed on an "AS IS" BASIS,
// WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
// See the License for the specific language governing permissions and
// limitations under the License.

#ifndef BOWRNN_BOWRNN_HPP
#define BOWRNN_BOWRNN_HPP

#include "bowrnn/bownet.hpp"
#include "bowrnn/codebook.hpp"
#include "bowrnn/data.hpp"
#include "bowrnn/featmap.hpp"
#include "bowrnn/kernels.hpp"
#include "bowrnn/optim.hpp"
#include "bowrnn/sequence.hpp"

#endif  // BOWRNN_BOWRNN_HPP
