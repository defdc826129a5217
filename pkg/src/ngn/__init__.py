"""Natural graph networks: locally equivariant message passing on graphs.

The package is organized bottom-up:

- ``graph_core``: concrete graphs, isomorphisms, canonical forms, automorphisms
- ``neighbourhoods``: k-hop node/edge neighbourhoods and isomorphism restriction
- ``representations``: permutation feature spaces and their matrices
- ``kernel_solver``: edge-neighbourhood classes and equivariant kernel bases
- ``ngn_layer``: the weight-shared linear layer over global features
- ``message_net``: the GCN-on-edge-neighbourhood message parameterization
- ``autodiff``: minimal reverse-mode engine and Adam
- ``batched``: compiled, vectorized forward for training and benchmarks
- ``datasets`` / ``srg`` / ``lattices``: corpora and synthetic suites
- ``models`` / ``cli``: classifiers, experiments, command-line harness
"""

__version__ = "0.1.0"
