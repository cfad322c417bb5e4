use crate::error::Result;
use crate::nn::{ConvGrads, ConvSpec};
use crate::tensor::Tensor;

pub type NamedRef<'a> = (String, &'a Tensor);
pub type NamedMut<'a> = (String, &'a mut Tensor);

pub(crate) fn conv_named<'a>(prefix: &str, c: &'a ConvSpec) -> Vec<NamedRef<'a>> {
    vec![
        (format!("{prefix}.weight"), &c.weights),
        (format!("{prefix}.bias"), &c.bias),
    ]
}

pub(crate) fn conv_named_mut<'a>(prefix: &str, c: &'a mut ConvSpec) -> Vec<NamedMut<'a>> {
    vec![
        (format!("{prefix}.weight"), &mut c.weights),
        (format!("{prefix}.bias"), &mut c.bias),
    ]
}

pub(crate) fn accumulate_conv(into: &mut ConvSpec, g: &ConvGrads) -> Result<()> {
    into.weights.add_assign(&g.weights)?;
    into.bias.add_assign(&g.bias)
}
