use crate::model::{Configuration, State};

/// Why a site changed.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
#[repr(u8)]
pub enum Cause {
    /// 0 -> i from an occupied neighbour.
    Birth = 0,
    /// 1 -> 2 from an infected neighbour at finite rate.
    Infection = 1,
    /// 1 -> 2 by instantaneous invasion.
    Invasion = 2,
    /// i -> 0.
    Death = 3,
    /// 2 -> 1.
    Recovery = 4,
}

impl Cause {
    pub fn from_code(code: u8) -> Option<Cause> {
        Some(match code {
            0 => Cause::Birth,
            1 => Cause::Infection,
            2 => Cause::Invasion,
            3 => Cause::Death,
            4 => Cause::Recovery,
            _ => return None,
        })
    }
}

/// One site update. `from == to` marks a null event: a birth arrow from an
/// occupied site landing on a site of the same type, recorded only when an
/// observer asks for it.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub struct Change {
    pub site: u32,
    /// Parent (birth), infector (infection, invasion) or none.
    pub source: Option<u32>,
    pub cause: Cause,
    pub from: State,
    pub to: State,
}

impl Change {
    pub fn is_null(&self) -> bool {
        self.from == self.to
    }
}

/// Event hooks called by the engines during a single run.
///
/// `advance` is called with the pre-event configuration just before the
/// changes at time `t` are applied; `event` is called with the post-event
/// configuration. All changes at one instant (an event plus its invasion
/// chain) arrive in one `event` call, in application order.
///
/// Null events are delivered when any observer in a composite asks for
/// them, so every observer skips changes with [`Change::is_null`] unless it
/// uses them.
pub trait Observer {
    fn start(&mut self, _t0: f64, _cfg: &Configuration) {}
    fn advance(&mut self, _t: f64, _cfg: &Configuration) {}
    fn event(&mut self, _t: f64, _changes: &[Change], _cfg: &Configuration) {}
    fn finish(&mut self, _t_end: f64, _cfg: &Configuration) {}
    fn wants_null_events(&self) -> bool {
        false
    }
}

impl Observer for () {}

impl<T: Observer + ?Sized> Observer for &mut T {
    fn start(&mut self, t0: f64, cfg: &Configuration) {
        (**self).start(t0, cfg)
    }
    fn advance(&mut self, t: f64, cfg: &Configuration) {
        (**self).advance(t, cfg)
    }
    fn event(&mut self, t: f64, changes: &[Change], cfg: &Configuration) {
        (**self).event(t, changes, cfg)
    }
    fn finish(&mut self, t_end: f64, cfg: &Configuration) {
        (**self).finish(t_end, cfg)
    }
    fn wants_null_events(&self) -> bool {
        (**self).wants_null_events()
    }
}

impl<T: Observer> Observer for Vec<T> {
    fn start(&mut self, t0: f64, cfg: &Configuration) {
        self.iter_mut().for_each(|o| o.start(t0, cfg))
    }
    fn advance(&mut self, t: f64, cfg: &Configuration) {
        self.iter_mut().for_each(|o| o.advance(t, cfg))
    }
    fn event(&mut self, t: f64, changes: &[Change], cfg: &Configuration) {
        self.iter_mut().for_each(|o| o.event(t, changes, cfg))
    }
    fn finish(&mut self, t_end: f64, cfg: &Configuration) {
        self.iter_mut().for_each(|o| o.finish(t_end, cfg))
    }
    fn wants_null_events(&self) -> bool {
        self.iter().any(|o| o.wants_null_events())
    }
}

macro_rules! tuple_observer {
    ($($name:ident $idx:tt),+) => {
        impl<$($name: Observer),+> Observer for ($($name,)+) {
            fn start(&mut self, t0: f64, cfg: &Configuration) {
                $(self.$idx.start(t0, cfg);)+
            }
            fn advance(&mut self, t: f64, cfg: &Configuration) {
                $(self.$idx.advance(t, cfg);)+
            }
            fn event(&mut self, t: f64, changes: &[Change], cfg: &Configuration) {
                $(self.$idx.event(t, changes, cfg);)+
            }
            fn finish(&mut self, t_end: f64, cfg: &Configuration) {
                $(self.$idx.finish(t_end, cfg);)+
            }
            fn wants_null_events(&self) -> bool {
                false $(|| self.$idx.wants_null_events())+
            }
        }
    };
}

tuple_observer!(A 0);
tuple_observer!(A 0, B 1);
tuple_observer!(A 0, B 1, C 2);
tuple_observer!(A 0, B 1, C 2, D 3);

