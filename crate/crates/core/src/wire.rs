//! Byte encoding used on every bus hop.
//!
//! Layout: little-endian fixed-width integers, IEEE-754 binary64 for reals
//! (bit pattern preserved, NaN payloads included), `u8` 0/1 for booleans,
//! `u8` tags for enums, and a `u32` length prefix before strings and
//! sequences. Structs are their fields in declaration order. Decoding is
//! strict: invalid tags, non-0/1 booleans, bad UTF-8 and trailing bytes are
//! rejected, so encoding is a bijection between values and accepted byte
//! strings.

use thiserror::Error;

use crate::geometry::{
    AgentBody, DiscreteAction, Episode, EpisodeResult, Point2, Pose2D, Termination, VelocityCommand,
};
use crate::grid::{Cell, OccupancyGrid};

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum WireError {
    #[error("unexpected end of input while reading {0}")]
    Truncated(&'static str),
    #[error("invalid tag {tag} for {ty}")]
    BadTag { ty: &'static str, tag: u8 },
    #[error("invalid utf-8 in string")]
    BadUtf8,
    #[error("{0} trailing bytes after value")]
    Trailing(usize),
    #[error("decoded value violates invariant: {0}")]
    Invalid(String),
}

pub struct Reader<'a> {
    buf: &'a [u8],
}

impl<'a> Reader<'a> {
    pub fn new(buf: &'a [u8]) -> Self {
        Self { buf }
    }

    pub fn take(&mut self, n: usize, what: &'static str) -> Result<&'a [u8], WireError> {
        if self.buf.len() < n {
            return Err(WireError::Truncated(what));
        }
        let (head, tail) = self.buf.split_at(n);
        self.buf = tail;
        Ok(head)
    }

    fn array<const N: usize>(&mut self, what: &'static str) -> Result<[u8; N], WireError> {
        let bytes = self.take(N, what)?;
        let mut out = [0u8; N];
        out.copy_from_slice(bytes);
        Ok(out)
    }

    pub fn remaining(&self) -> usize {
        self.buf.len()
    }
}

/// A value with a stable byte encoding and a type tag for topic/service
/// type checking.
pub trait Wire: Sized {
    const TYPE_TAG: &'static str;

    fn encode(&self, out: &mut Vec<u8>);
    fn decode(r: &mut Reader<'_>) -> Result<Self, WireError>;
}

pub fn to_bytes<T: Wire>(v: &T) -> Vec<u8> {
    let mut out = Vec::new();
    v.encode(&mut out);
    out
}

pub fn from_bytes<T: Wire>(bytes: &[u8]) -> Result<T, WireError> {
    let mut r = Reader::new(bytes);
    let v = T::decode(&mut r)?;
    if r.remaining() != 0 {
        return Err(WireError::Trailing(r.remaining()));
    }
    Ok(v)
}

macro_rules! wire_int {
    ($($t:ty => $tag:literal),*) => {$(
        impl Wire for $t {
            const TYPE_TAG: &'static str = $tag;
            fn encode(&self, out: &mut Vec<u8>) {
                out.extend_from_slice(&self.to_le_bytes());
            }
            fn decode(r: &mut Reader<'_>) -> Result<Self, WireError> {
                Ok(<$t>::from_le_bytes(r.array($tag)?))
            }
        }
    )*};
}

wire_int!(u8 => "u8", u32 => "u32", u64 => "u64", i64 => "i64");

impl Wire for f64 {
    const TYPE_TAG: &'static str = "f64";
    fn encode(&self, out: &mut Vec<u8>) {
        out.extend_from_slice(&self.to_bits().to_le_bytes());
    }
    fn decode(r: &mut Reader<'_>) -> Result<Self, WireError> {
        Ok(f64::from_bits(u64::from_le_bytes(r.array("f64")?)))
    }
}

impl Wire for bool {
    const TYPE_TAG: &'static str = "bool";
    fn encode(&self, out: &mut Vec<u8>) {
        out.push(u8::from(*self));
    }
    fn decode(r: &mut Reader<'_>) -> Result<Self, WireError> {
        match u8::decode(r)? {
            0 => Ok(false),
            1 => Ok(true),
            tag => Err(WireError::BadTag { ty: "bool", tag }),
        }
    }
}

fn encode_len(len: usize, out: &mut Vec<u8>) {
    let len = u32::try_from(len).expect("sequence longer than u32::MAX");
    len.encode(out);
}

impl Wire for String {
    const TYPE_TAG: &'static str = "string";
    fn encode(&self, out: &mut Vec<u8>) {
        encode_len(self.len(), out);
        out.extend_from_slice(self.as_bytes());
    }
    fn decode(r: &mut Reader<'_>) -> Result<Self, WireError> {
        let len = u32::decode(r)? as usize;
        let bytes = r.take(len, "string")?;
        String::from_utf8(bytes.to_vec()).map_err(|_| WireError::BadUtf8)
    }
}

impl<T: Wire> Wire for Option<T> {
    const TYPE_TAG: &'static str = "option";
    fn encode(&self, out: &mut Vec<u8>) {
        match self {
            None => out.push(0),
            Some(v) => {
                out.push(1);
                v.encode(out);
            }
        }
    }
    fn decode(r: &mut Reader<'_>) -> Result<Self, WireError> {
        match u8::decode(r)? {
            0 => Ok(None),
            1 => Ok(Some(T::decode(r)?)),
            tag => Err(WireError::BadTag { ty: "option", tag }),
        }
    }
}

/// Implements [`Wire`] for a struct as its fields in declaration order.
macro_rules! wire_struct {
    ($name:ident, $tag:literal, { $($field:ident : $ty:ty),* $(,)? }) => {
        impl $crate::wire::Wire for $name {
            const TYPE_TAG: &'static str = $tag;
            fn encode(&self, out: &mut Vec<u8>) {
                $( $crate::wire::Wire::encode(&self.$field, out); )*
            }
            fn decode(r: &mut $crate::wire::Reader<'_>) -> Result<Self, $crate::wire::WireError> {
                Ok($name { $( $field: <$ty as $crate::wire::Wire>::decode(r)?, )* })
            }
        }
    };
}
pub(crate) use wire_struct;

impl<T: Wire> Wire for Vec<T> {
    const TYPE_TAG: &'static str = "vec";
    fn encode(&self, out: &mut Vec<u8>) {
        encode_len(self.len(), out);
        for v in self {
            v.encode(out);
        }
    }
    fn decode(r: &mut Reader<'_>) -> Result<Self, WireError> {
        let len = u32::decode(r)? as usize;
        // cap the preallocation by what the buffer could possibly hold
        let mut out = Vec::with_capacity(len.min(r.remaining()));
        for _ in 0..len {
            out.push(T::decode(r)?);
        }
        Ok(out)
    }
}

impl Wire for [f64; 3] {
    const TYPE_TAG: &'static str = "f64x3";
    fn encode(&self, out: &mut Vec<u8>) {
        for v in self {
            v.encode(out);
        }
    }
    fn decode(r: &mut Reader<'_>) -> Result<Self, WireError> {
        Ok([f64::decode(r)?, f64::decode(r)?, f64::decode(r)?])
    }
}

impl Wire for Point2 {
    const TYPE_TAG: &'static str = "Point2";
    fn encode(&self, out: &mut Vec<u8>) {
        self.x.encode(out);
        self.y.encode(out);
    }
    fn decode(r: &mut Reader<'_>) -> Result<Self, WireError> {
        Ok(Point2::new(f64::decode(r)?, f64::decode(r)?))
    }
}

impl Wire for Pose2D {
    const TYPE_TAG: &'static str = "Pose2D";
    fn encode(&self, out: &mut Vec<u8>) {
        self.x.encode(out);
        self.y.encode(out);
        self.theta.encode(out);
    }
    fn decode(r: &mut Reader<'_>) -> Result<Self, WireError> {
        let (x, y, theta) = (f64::decode(r)?, f64::decode(r)?, f64::decode(r)?);
        let pose = Pose2D::new(x, y, theta).map_err(|e| WireError::Invalid(e.to_string()))?;
        if pose.theta.to_bits() != theta.to_bits() {
            return Err(WireError::Invalid(format!("heading {theta} not normalized")));
        }
        Ok(pose)
    }
}

impl Wire for DiscreteAction {
    const TYPE_TAG: &'static str = "DiscreteAction";
    fn encode(&self, out: &mut Vec<u8>) {
        let tag = match self {
            DiscreteAction::MoveForward => 0u8,
            DiscreteAction::TurnLeft => 1,
            DiscreteAction::TurnRight => 2,
            DiscreteAction::Stop => 3,
        };
        out.push(tag);
    }
    fn decode(r: &mut Reader<'_>) -> Result<Self, WireError> {
        match u8::decode(r)? {
            0 => Ok(DiscreteAction::MoveForward),
            1 => Ok(DiscreteAction::TurnLeft),
            2 => Ok(DiscreteAction::TurnRight),
            3 => Ok(DiscreteAction::Stop),
            tag => Err(WireError::BadTag { ty: Self::TYPE_TAG, tag }),
        }
    }
}

impl Wire for Termination {
    const TYPE_TAG: &'static str = "Termination";
    fn encode(&self, out: &mut Vec<u8>) {
        let tag = Termination::ALL.iter().position(|t| t == self).expect("listed") as u8;
        out.push(tag);
    }
    fn decode(r: &mut Reader<'_>) -> Result<Self, WireError> {
        let tag = u8::decode(r)?;
        Termination::ALL.get(tag as usize).copied().ok_or(WireError::BadTag { ty: Self::TYPE_TAG, tag })
    }
}

impl Wire for VelocityCommand {
    const TYPE_TAG: &'static str = "VelocityCommand";
    fn encode(&self, out: &mut Vec<u8>) {
        self.linear.encode(out);
        self.angular.encode(out);
    }
    fn decode(r: &mut Reader<'_>) -> Result<Self, WireError> {
        Ok(VelocityCommand { linear: <[f64; 3]>::decode(r)?, angular: <[f64; 3]>::decode(r)? })
    }
}

impl Wire for AgentBody {
    const TYPE_TAG: &'static str = "AgentBody";
    fn encode(&self, out: &mut Vec<u8>) {
        self.radius.encode(out);
        self.height.encode(out);
        self.mass.encode(out);
        self.friction.encode(out);
    }
    fn decode(r: &mut Reader<'_>) -> Result<Self, WireError> {
        Ok(AgentBody {
            radius: f64::decode(r)?,
            height: f64::decode(r)?,
            mass: f64::decode(r)?,
            friction: f64::decode(r)?,
        })
    }
}

impl Wire for Episode {
    const TYPE_TAG: &'static str = "Episode";
    fn encode(&self, out: &mut Vec<u8>) {
        self.episode_id.encode(out);
        self.scene_id.encode(out);
        self.start.encode(out);
        self.goal.encode(out);
    }
    fn decode(r: &mut Reader<'_>) -> Result<Self, WireError> {
        Ok(Episode {
            episode_id: String::decode(r)?,
            scene_id: String::decode(r)?,
            start: Pose2D::decode(r)?,
            goal: Point2::decode(r)?,
        })
    }
}

impl Wire for EpisodeResult {
    const TYPE_TAG: &'static str = "EpisodeResult";
    fn encode(&self, out: &mut Vec<u8>) {
        self.episode_id.encode(out);
        self.success.encode(out);
        self.spl.encode(out);
        self.num_steps.encode(out);
        self.path_length.encode(out);
        self.geodesic_length.encode(out);
        self.wall_time.encode(out);
        self.sim_time.encode(out);
        self.termination.encode(out);
    }
    fn decode(r: &mut Reader<'_>) -> Result<Self, WireError> {
        Ok(EpisodeResult {
            episode_id: String::decode(r)?,
            success: bool::decode(r)?,
            spl: f64::decode(r)?,
            num_steps: u32::decode(r)?,
            path_length: f64::decode(r)?,
            geodesic_length: f64::decode(r)?,
            wall_time: f64::decode(r)?,
            sim_time: f64::decode(r)?,
            termination: Termination::decode(r)?,
        })
    }
}

impl Wire for Cell {
    const TYPE_TAG: &'static str = "Cell";
    fn encode(&self, out: &mut Vec<u8>) {
        out.push(match self {
            Cell::Free => 0,
            Cell::Occupied => 1,
            Cell::Unknown => 2,
        });
    }
    fn decode(r: &mut Reader<'_>) -> Result<Self, WireError> {
        match u8::decode(r)? {
            0 => Ok(Cell::Free),
            1 => Ok(Cell::Occupied),
            2 => Ok(Cell::Unknown),
            tag => Err(WireError::BadTag { ty: Self::TYPE_TAG, tag }),
        }
    }
}

impl Wire for OccupancyGrid {
    const TYPE_TAG: &'static str = "OccupancyGrid";
    fn encode(&self, out: &mut Vec<u8>) {
        (self.width() as u64).encode(out);
        (self.height() as u64).encode(out);
        self.resolution().encode(out);
        self.origin().encode(out);
        encode_len(self.cells().len(), out);
        for c in self.cells() {
            c.encode(out);
        }
    }
    fn decode(r: &mut Reader<'_>) -> Result<Self, WireError> {
        let width = u64::decode(r)? as usize;
        let height = u64::decode(r)? as usize;
        let resolution = f64::decode(r)?;
        let origin = Pose2D::decode(r)?;
        let cells = Vec::<Cell>::decode(r)?;
        OccupancyGrid::new(width, height, resolution, origin, cells).map_err(|e| WireError::Invalid(e.to_string()))
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn any_f64_bits() -> impl Strategy<Value = f64> {
        any::<u64>().prop_map(f64::from_bits)
    }

    fn finite() -> impl Strategy<Value = f64> {
        proptest::num::f64::NORMAL | proptest::num::f64::ZERO | proptest::num::f64::SUBNORMAL
    }

    fn pose() -> impl Strategy<Value = Pose2D> {
        (finite(), finite(), -1e3f64..1e3).prop_map(|(x, y, t)| Pose2D::new(x, y, t).unwrap())
    }

    fn cmd() -> impl Strategy<Value = VelocityCommand> {
        (proptest::array::uniform3(any_f64_bits()), proptest::array::uniform3(any_f64_bits()))
            .prop_map(|(linear, angular)| VelocityCommand { linear, angular })
    }

    fn episode() -> impl Strategy<Value = Episode> {
        (".{0,12}", ".{0,12}", pose(), finite(), finite()).prop_map(|(id, scene, start, gx, gy)| Episode {
            episode_id: id,
            scene_id: scene,
            start,
            goal: Point2::new(gx, gy),
        })
    }

    proptest! {
        #[test]
        fn velocity_command_round_trip_bitwise(c in cmd()) {
            let bytes = to_bytes(&c);
            prop_assert_eq!(bytes.len(), 48);
            let back: VelocityCommand = from_bytes(&bytes).unwrap();
            prop_assert!(back.bit_eq(&c));
            prop_assert_eq!(to_bytes(&back), bytes);
        }

        #[test]
        fn episode_round_trip(e in episode()) {
            let bytes = to_bytes(&e);
            let back: Episode = from_bytes(&bytes).unwrap();
            prop_assert!(back.start.bit_eq(&e.start));
            prop_assert_eq!(&back, &e);
            prop_assert_eq!(to_bytes(&back), bytes);
        }

        #[test]
        fn accepted_bytes_reencode_identically(bytes in proptest::collection::vec(any::<u8>(), 0..64)) {
            // injectivity from the byte side: anything the decoder accepts
            // re-encodes to the same bytes
            if let Ok(v) = from_bytes::<Vec<DiscreteAction>>(&bytes) {
                prop_assert_eq!(to_bytes(&v), bytes.clone());
            }
            if let Ok(v) = from_bytes::<String>(&bytes) {
                prop_assert_eq!(to_bytes(&v), bytes);
            }
        }
    }

    #[test]
    fn strict_decoding() {
        assert_eq!(from_bytes::<bool>(&[2]), Err(WireError::BadTag { ty: "bool", tag: 2 }));
        assert_eq!(from_bytes::<DiscreteAction>(&[4]).unwrap_err(), WireError::BadTag { ty: "DiscreteAction", tag: 4 });
        assert_eq!(from_bytes::<u32>(&[1, 0, 0, 0, 9]), Err(WireError::Trailing(1)));
        assert!(matches!(from_bytes::<u64>(&[1, 0]), Err(WireError::Truncated(_))));
        assert_eq!(from_bytes::<String>(&[1, 0, 0, 0, 0xff]), Err(WireError::BadUtf8));
        // un-normalized heading is not a valid Pose2D encoding
        let mut b = Vec::new();
        0.0f64.encode(&mut b);
        0.0f64.encode(&mut b);
        4.0f64.encode(&mut b);
        assert!(matches!(from_bytes::<Pose2D>(&b), Err(WireError::Invalid(_))));
    }

    #[test]
    fn documented_layout() {
        let cmd = VelocityCommand::planar(0.25, 0.0);
        let bytes = to_bytes(&cmd);
        assert_eq!(&bytes[..8], &0.25f64.to_bits().to_le_bytes());
        assert_eq!(to_bytes(&"ab".to_string()), vec![2, 0, 0, 0, b'a', b'b']);
    }

    #[test]
    fn grid_round_trip() {
        let text = "resolution 0.1\norigin -1 -2 0.5\n#..\n.?.\n..#\n";
        let g: OccupancyGrid = text.parse().unwrap();
        let back: OccupancyGrid = from_bytes(&to_bytes(&g)).unwrap();
        assert_eq!(back, g);
    }
}
