"""CFG signatures: identity comes from graph shape only."""
from tplhound import Cfg, LibraryProfile, jaccard, method_signature

straight = Cfg(3, ((0, 1), (1, 2)))
diamond = Cfg(4, ((0, 1), (0, 2), (1, 3), (2, 3)))
print(method_signature(straight))   # 3:0->(1);1->(2)
print(method_signature(diamond))    # 4:0->(1,2);1->(3);2->(3)

# same shape with shuffled node numbers gives the same signature
relabelled = Cfg(4, ((0, 3), (0, 1), (3, 2), (1, 2)))
print(method_signature(relabelled) == method_signature(diamond))


def chain(n):
    return method_signature(Cfg(n, tuple((i, i + 1) for i in range(n - 1))))


a = LibraryProfile.build(chain(n) for n in (1, 2, 3, 4))
b = LibraryProfile.build(chain(n) for n in (2, 3, 4, 5))
print("profile a:", [s.text for s in a.signatures])
print("jaccard(a, b) =", jaccard(a, b))  # 3 shared of 5 -> 0.6
