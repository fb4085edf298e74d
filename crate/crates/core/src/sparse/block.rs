//! Sparse sub-blocks (SSC → IAN → ReLU), residual blocks, and the FCN stack.

use rand::Rng;

use crate::error::{Error, Result};
use crate::real::Real;

use super::ian::{ian_backward, ian_forward, IanParams, InstanceAssignment};
use super::ssc::{ssc_backward_indexed, ssc_forward_indexed, NeighborIndex, SscWeights};
use super::SparseTensor;

#[derive(Debug, Clone, PartialEq)]
pub struct SubBlock<T = f32> {
    pub conv: SscWeights<T>,
    pub norm: IanParams<T>,
}

impl<T: Real> SubBlock<T> {
    pub fn random(channels: usize, scale: f64, rng: &mut impl Rng) -> Self {
        Self { conv: SscWeights::random(channels, channels, scale, rng), norm: IanParams::identity(channels) }
    }

    pub fn zeros(channels: usize) -> Self {
        Self { conv: SscWeights::zeros(channels, channels), norm: IanParams::identity(channels) }
    }

    fn forward(&self, x: &SparseTensor<T>, a: &InstanceAssignment, idx: &NeighborIndex) -> Result<SubTape<T>> {
        let conv_out = ssc_forward_indexed(x, &self.conv, idx)?;
        let norm_out = ian_forward(&conv_out, a, &self.norm)?;
        Ok(SubTape { input: x.clone(), conv_out, norm_out })
    }

    fn backward(
        &self,
        tape: &SubTape<T>,
        a: &InstanceAssignment,
        idx: &NeighborIndex,
        upstream: &SparseTensor<T>,
    ) -> Result<(SparseTensor<T>, SubBlockGrads<T>)> {
        let relu_grad: Vec<T> = upstream
            .values()
            .iter()
            .zip(tape.norm_out.values())
            .map(|(&g, &z)| if z > T::zero() { g } else { T::zero() })
            .collect();
        let relu_grad = upstream.with_values(upstream.channels(), relu_grad);
        let gn = ian_backward(&tape.conv_out, a, &self.norm, &relu_grad)?;
        let gc = ssc_backward_indexed(&tape.input, &self.conv, &gn.input, idx)?;
        Ok((gc.input, SubBlockGrads { conv: gc.weights, gamma: gn.gamma, beta: gn.beta }))
    }
}

struct SubTape<T> {
    input: SparseTensor<T>,
    conv_out: SparseTensor<T>,
    norm_out: SparseTensor<T>,
}

impl<T: Real> SubTape<T> {
    fn output(&self) -> SparseTensor<T> {
        self.norm_out.relu()
    }
}

/// Two sub-blocks with a skip connection, then a third sub-block.
#[derive(Debug, Clone, PartialEq)]
pub struct ResidualBlock<T = f32> {
    pub sub: [SubBlock<T>; 3],
}

impl<T: Real> ResidualBlock<T> {
    pub fn random(channels: usize, scale: f64, rng: &mut impl Rng) -> Self {
        Self {
            sub: [SubBlock::random(channels, scale, rng), SubBlock::random(channels, scale, rng), SubBlock::random(channels, scale, rng)],
        }
    }

    pub fn channels(&self) -> usize {
        self.sub[0].conv.c_in
    }

    fn check_channels(&self, input: usize) -> Result<()> {
        for sb in &self.sub {
            if sb.conv.c_in != input || sb.conv.c_out != input {
                return Err(Error::ChannelMismatch { expected: input, got: if sb.conv.c_in != input { sb.conv.c_in } else { sb.conv.c_out } });
            }
        }
        Ok(())
    }
}

/// Applies one residual block; the third sub-block is skipped when `is_last`.
pub fn sparse_residual_block<T: Real>(
    s: &SparseTensor<T>,
    block: &ResidualBlock<T>,
    assign: &InstanceAssignment,
    is_last: bool,
) -> Result<SparseTensor<T>> {
    let idx = NeighborIndex::build(s);
    Ok(block_forward(s, block, assign, is_last, &idx)?.output)
}

struct BlockTape<T> {
    subs: Vec<SubTape<T>>,
    output: SparseTensor<T>,
}

fn block_forward<T: Real>(
    s: &SparseTensor<T>,
    block: &ResidualBlock<T>,
    assign: &InstanceAssignment,
    is_last: bool,
    idx: &NeighborIndex,
) -> Result<BlockTape<T>> {
    block.check_channels(s.channels())?;
    let t1 = block.sub[0].forward(s, assign, idx)?;
    let t2 = block.sub[1].forward(&t1.output(), assign, idx)?;
    let skip = t2.output().add(s)?;
    let mut subs = vec![t1, t2];
    let output = if is_last {
        skip
    } else {
        let t3 = block.sub[2].forward(&skip, assign, idx)?;
        let out = t3.output();
        subs.push(t3);
        out
    };
    Ok(BlockTape { subs, output })
}

#[derive(Debug, Clone, PartialEq)]
pub struct SubBlockGrads<T = f32> {
    pub conv: SscWeights<T>,
    pub gamma: Vec<T>,
    pub beta: Vec<T>,
}

impl<T: Real> SubBlockGrads<T> {
    fn zeros(channels: usize) -> Self {
        Self { conv: SscWeights::zeros(channels, channels), gamma: vec![T::zero(); channels], beta: vec![T::zero(); channels] }
    }
}

/// Stack of residual blocks; the last block omits its third sub-block.
#[derive(Debug, Clone, PartialEq)]
pub struct SparseFcn<T = f32> {
    pub blocks: Vec<ResidualBlock<T>>,
}

/// Activations recorded by [`SparseFcn::forward_train`].
pub struct FcnTape<T> {
    index: NeighborIndex,
    blocks: Vec<BlockTape<T>>,
    output: SparseTensor<T>,
}

impl<T> FcnTape<T> {
    pub fn output(&self) -> &SparseTensor<T> {
        &self.output
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct FcnGrads<T = f32> {
    pub input: SparseTensor<T>,
    /// `[block][sub-block]`; unused third sub-block of the last block stays zero.
    pub blocks: Vec<[SubBlockGrads<T>; 3]>,
}

impl<T: Real> SparseFcn<T> {
    pub const DEFAULT_BLOCKS: usize = 3;
    pub const DEFAULT_WIDTH: usize = 32;

    pub fn random(channels: usize, n_blocks: usize, scale: f64, rng: &mut impl Rng) -> Self {
        Self { blocks: (0..n_blocks).map(|_| ResidualBlock::random(channels, scale, rng)).collect() }
    }

    pub fn channels(&self) -> usize {
        self.blocks.first().map_or(0, ResidualBlock::channels)
    }

    pub fn forward(&self, s: &SparseTensor<T>, assign: &InstanceAssignment) -> Result<SparseTensor<T>> {
        Ok(self.forward_train(s, assign)?.output)
    }

    pub fn forward_train(&self, s: &SparseTensor<T>, assign: &InstanceAssignment) -> Result<FcnTape<T>> {
        let index = NeighborIndex::build(s);
        let mut x = s.clone();
        let mut blocks = Vec::with_capacity(self.blocks.len());
        for (b, block) in self.blocks.iter().enumerate() {
            let tape = block_forward(&x, block, assign, b + 1 == self.blocks.len(), &index)?;
            x = tape.output.clone();
            blocks.push(tape);
        }
        Ok(FcnTape { index, blocks, output: x })
    }

    pub fn backward(&self, tape: &FcnTape<T>, assign: &InstanceAssignment, grad_out: &SparseTensor<T>) -> Result<FcnGrads<T>> {
        if !grad_out.same_sites(&tape.output) {
            return Err(Error::invalid("gradient site set differs from FCN output"));
        }
        let c = self.channels();
        let mut grads: Vec<[SubBlockGrads<T>; 3]> =
            (0..self.blocks.len()).map(|_| [SubBlockGrads::zeros(c), SubBlockGrads::zeros(c), SubBlockGrads::zeros(c)]).collect();
        let mut g = grad_out.clone();
        for (b, (block, bt)) in self.blocks.iter().zip(&tape.blocks).enumerate().rev() {
            if bt.subs.len() == 3 {
                let (gi, sg) = block.sub[2].backward(&bt.subs[2], assign, &tape.index, &g)?;
                grads[b][2] = sg;
                g = gi;
            }
            // g is now the gradient at the skip sum
            let (g1, sg) = block.sub[1].backward(&bt.subs[1], assign, &tape.index, &g)?;
            grads[b][1] = sg;
            let (g0, sg) = block.sub[0].backward(&bt.subs[0], assign, &tape.index, &g1)?;
            grads[b][0] = sg;
            g = g0.add(&g)?;
        }
        Ok(FcnGrads { input: g, blocks: grads })
    }

    /// Gradient-descent update `θ ← θ − lr·∇θ`.
    pub fn apply_gradients(&mut self, grads: &FcnGrads<T>, lr: T) {
        for (block, gb) in self.blocks.iter_mut().zip(&grads.blocks) {
            for (sb, g) in block.sub.iter_mut().zip(gb) {
                for (w, &d) in sb.conv.kernel.iter_mut().zip(&g.conv.kernel) {
                    *w -= lr * d;
                }
                for (w, &d) in sb.conv.bias.iter_mut().zip(&g.conv.bias) {
                    *w -= lr * d;
                }
                for (w, &d) in sb.norm.gamma.iter_mut().zip(&g.gamma) {
                    *w -= lr * d;
                }
                for (w, &d) in sb.norm.beta.iter_mut().zip(&g.beta) {
                    *w -= lr * d;
                }
            }
        }
    }
}
